//! Layer primitives with explicit forward and backward passes.
//!
//! Sequences are `[length, channels]` tensors. Parameter gradients are
//! accumulated into a layer of identical shape passed to `backward`.

use rand::Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};

fn glorot<R: Rng>(t: &mut Tensor, fan_in: usize, fan_out: usize, rng: &mut R) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for x in t.data_mut() {
        *x = rng.gen_range(-limit..limit);
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// 1-D convolution, stride 1, "same" zero padding.
///
/// Weights are `[kernel, in_channels, out_channels]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv1d {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Conv1d {
    pub fn zeros(kernel: usize, in_channels: usize, out_channels: usize) -> Self {
        Conv1d {
            weight: Tensor::zeros(&[kernel, in_channels, out_channels]),
            bias: Tensor::zeros(&[out_channels]),
        }
    }

    pub fn init<R: Rng>(kernel: usize, in_channels: usize, out_channels: usize, rng: &mut R) -> Self {
        let mut layer = Self::zeros(kernel, in_channels, out_channels);
        glorot(
            &mut layer.weight,
            kernel * in_channels,
            kernel * out_channels,
            rng,
        );
        layer
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[2]
    }

    fn pad_left(&self) -> usize {
        (self.kernel() - 1) / 2
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (k, ic, oc) = (self.kernel(), self.in_channels(), self.out_channels());
        if x.shape().len() != 2 || x.cols() != ic {
            return Err(Error::shape(
                "conv1d",
                format!("input {:?}, expected [len, {ic}]", x.shape()),
            ));
        }
        let len = x.rows();
        let pad = self.pad_left();
        let w = self.weight.data();
        let mut out = Tensor::zeros(&[len, oc]);
        let out_data = out.data_mut();
        for t in 0..len {
            let orow = &mut out_data[t * oc..(t + 1) * oc];
            orow.copy_from_slice(self.bias.data());
            for kk in 0..k {
                let Some(src) = (t + kk).checked_sub(pad).filter(|&s| s < len) else {
                    continue;
                };
                let xrow = x.row(src);
                for (c, &xv) in xrow.iter().enumerate() {
                    if xv == 0.0 {
                        continue;
                    }
                    let wrow = &w[(kk * ic + c) * oc..(kk * ic + c + 1) * oc];
                    for (o, &wv) in orow.iter_mut().zip(wrow) {
                        *o += xv * wv;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Returns the input gradient; parameter gradients are added to `grads`.
    pub fn backward(&self, x: &Tensor, grad_out: &Tensor, grads: &mut Conv1d) -> Tensor {
        let (k, ic, oc) = (self.kernel(), self.in_channels(), self.out_channels());
        let len = x.rows();
        let pad = self.pad_left();
        let w = self.weight.data();
        let mut dx = Tensor::zeros(&[len, ic]);
        for (t, g) in grad_out.data().chunks_exact(oc).enumerate() {
            for (db, &gv) in grads.bias.data_mut().iter_mut().zip(g) {
                *db += gv;
            }
            for kk in 0..k {
                let Some(src) = (t + kk).checked_sub(pad).filter(|&s| s < len) else {
                    continue;
                };
                for c in 0..ic {
                    let base = (kk * ic + c) * oc;
                    let xv = x.row(src)[c];
                    let wrow = &w[base..base + oc];
                    let dot: f64 = wrow.iter().zip(g).map(|(a, b)| a * b).sum();
                    dx.data_mut()[src * ic + c] += dot;
                    if xv != 0.0 {
                        let dw = &mut grads.weight.data_mut()[base..base + oc];
                        for (d, &gv) in dw.iter_mut().zip(g) {
                            *d += xv * gv;
                        }
                    }
                }
            }
        }
        dx
    }
}

/// Max pooling over the length axis with window = stride = `width`;
/// a trailing partial window is dropped. Returns the pooled tensor and,
/// for every output cell, the flat input index that won.
pub fn maxpool1d_forward(x: &Tensor, width: usize) -> Result<(Tensor, Vec<usize>)> {
    if x.shape().len() != 2 || width == 0 {
        return Err(Error::shape(
            "maxpool1d",
            format!("input {:?}, width {width}", x.shape()),
        ));
    }
    let (len, ch) = (x.rows(), x.cols());
    let out_len = len / width;
    let mut out = Tensor::zeros(&[out_len, ch]);
    let mut argmax = vec![0; out_len * ch];
    for p in 0..out_len {
        for c in 0..ch {
            let mut best = p * width * ch + c;
            for j in 1..width {
                let idx = (p * width + j) * ch + c;
                if x.data()[idx] > x.data()[best] {
                    best = idx;
                }
            }
            out.data_mut()[p * ch + c] = x.data()[best];
            argmax[p * ch + c] = best;
        }
    }
    Ok((out, argmax))
}

pub fn maxpool1d_backward(grad_out: &Tensor, argmax: &[usize], input_shape: &[usize]) -> Tensor {
    let mut dx = Tensor::zeros(input_shape);
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        dx.data_mut()[idx] += g;
    }
    dx
}

pub fn relu_inplace(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Zeroes gradient entries where the ReLU output was not positive.
pub fn relu_backward_inplace(grad: &mut [f64], output: &[f64]) {
    for (g, &y) in grad.iter_mut().zip(output) {
        if y <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Fully connected layer; weights are `[inputs, outputs]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            weight: Tensor::zeros(&[inputs, outputs]),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn init<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let mut layer = Self::zeros(inputs, outputs);
        glorot(&mut layer.weight, inputs, outputs, rng);
        layer
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.inputs() {
            return Err(Error::shape(
                "dense",
                format!("input length {}, expected {}", x.len(), self.inputs()),
            ));
        }
        let n_out = self.outputs();
        let mut out = self.bias.data().to_vec();
        for (i, &xv) in x.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let wrow = &self.weight.data()[i * n_out..(i + 1) * n_out];
            for (o, &wv) in out.iter_mut().zip(wrow) {
                *o += xv * wv;
            }
        }
        Ok(out)
    }

    pub fn backward(&self, x: &[f64], grad_out: &[f64], grads: &mut Dense) -> Vec<f64> {
        let n_out = self.outputs();
        for (db, &g) in grads.bias.data_mut().iter_mut().zip(grad_out) {
            *db += g;
        }
        let mut dx = vec![0.0; x.len()];
        for (i, &xv) in x.iter().enumerate() {
            let wrow = &self.weight.data()[i * n_out..(i + 1) * n_out];
            dx[i] = wrow.iter().zip(grad_out).map(|(w, g)| w * g).sum();
            if xv != 0.0 {
                let dw = &mut grads.weight.data_mut()[i * n_out..(i + 1) * n_out];
                for (d, &g) in dw.iter_mut().zip(grad_out) {
                    *d += xv * g;
                }
            }
        }
        dx
    }
}

/// Single-layer LSTM returning the final hidden state.
///
/// Gate blocks in the fused `4 * hidden` axis are ordered input, forget,
/// cell candidate, output.
#[derive(Clone, Debug, PartialEq)]
pub struct Lstm {
    /// `[input_dim, 4 * hidden]`
    pub w_input: Tensor,
    /// `[hidden, 4 * hidden]`
    pub w_hidden: Tensor,
    /// `[4 * hidden]`
    pub bias: Tensor,
}

/// Per-step activations kept for backpropagation through time.
#[derive(Clone, Debug, Default)]
pub struct LstmCache {
    /// gate activations `[i | f | g | o]` per step
    gates: Vec<Vec<f64>>,
    cells: Vec<Vec<f64>>,
    hiddens: Vec<Vec<f64>>,
}

impl Lstm {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Lstm {
            w_input: Tensor::zeros(&[input_dim, 4 * hidden]),
            w_hidden: Tensor::zeros(&[hidden, 4 * hidden]),
            bias: Tensor::zeros(&[4 * hidden]),
        }
    }

    /// Glorot-uniform weights, zero bias except 1.0 on the forget gate.
    pub fn init<R: Rng>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let mut layer = Self::zeros(input_dim, hidden);
        glorot(&mut layer.w_input, input_dim, 4 * hidden, rng);
        glorot(&mut layer.w_hidden, hidden, 4 * hidden, rng);
        layer.bias.data_mut()[hidden..2 * hidden].fill(1.0);
        layer
    }

    pub fn input_dim(&self) -> usize {
        self.w_input.shape()[0]
    }

    pub fn hidden(&self) -> usize {
        self.w_hidden.shape()[0]
    }

    /// Runs over every row of `x` (`[steps, input_dim]`); zero steps give a
    /// zero hidden state.
    pub fn forward(&self, x: &Tensor) -> Result<(Vec<f64>, LstmCache)> {
        let (e, h) = (self.input_dim(), self.hidden());
        let steps = x.rows();
        if steps > 0 && (x.shape().len() != 2 || x.cols() != e) {
            return Err(Error::shape(
                "lstm",
                format!("input {:?}, expected [steps, {e}]", x.shape()),
            ));
        }
        let h4 = 4 * h;
        let mut cache = LstmCache::default();
        let mut hidden = vec![0.0; h];
        let mut cell = vec![0.0; h];
        let wx = self.w_input.data();
        let wh = self.w_hidden.data();
        for t in 0..steps {
            let mut z = self.bias.data().to_vec();
            for (i, &xv) in x.row(t).iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                for (zv, &w) in z.iter_mut().zip(&wx[i * h4..(i + 1) * h4]) {
                    *zv += xv * w;
                }
            }
            for (j, &hv) in hidden.iter().enumerate() {
                if hv == 0.0 {
                    continue;
                }
                for (zv, &w) in z.iter_mut().zip(&wh[j * h4..(j + 1) * h4]) {
                    *zv += hv * w;
                }
            }
            for (k, zv) in z.iter_mut().enumerate() {
                *zv = if (2 * h..3 * h).contains(&k) {
                    zv.tanh()
                } else {
                    sigmoid(*zv)
                };
            }
            let (ig, rest) = z.split_at(h);
            let (fg, rest) = rest.split_at(h);
            let (gg, og) = rest.split_at(h);
            for j in 0..h {
                cell[j] = fg[j] * cell[j] + ig[j] * gg[j];
                hidden[j] = og[j] * cell[j].tanh();
            }
            cache.gates.push(z);
            cache.cells.push(cell.clone());
            cache.hiddens.push(hidden.clone());
        }
        Ok((hidden, cache))
    }

    /// Backpropagation through time from the gradient of the final hidden state.
    pub fn backward(&self, x: &Tensor, cache: &LstmCache, grad_h: &[f64], grads: &mut Lstm) -> Tensor {
        let (e, h) = (self.input_dim(), self.hidden());
        let h4 = 4 * h;
        let steps = cache.gates.len();
        let mut dx = Tensor::zeros(&[steps, e]);
        let mut dh = grad_h.to_vec();
        let mut dc = vec![0.0; h];
        let mut dz = vec![0.0; h4];
        let zeros = vec![0.0; h];
        for t in (0..steps).rev() {
            let gates = &cache.gates[t];
            let c_prev = if t > 0 { &cache.cells[t - 1] } else { &zeros };
            let h_prev = if t > 0 { &cache.hiddens[t - 1] } else { &zeros };
            let c = &cache.cells[t];
            for j in 0..h {
                let (i, f, g, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
                let tc = c[j].tanh();
                let d_o = dh[j] * tc;
                dc[j] += dh[j] * o * (1.0 - tc * tc);
                dz[j] = dc[j] * g * i * (1.0 - i);
                dz[h + j] = dc[j] * c_prev[j] * f * (1.0 - f);
                dz[2 * h + j] = dc[j] * i * (1.0 - g * g);
                dz[3 * h + j] = d_o * o * (1.0 - o);
                dc[j] *= f;
            }
            for (b, &d) in grads.bias.data_mut().iter_mut().zip(&dz) {
                *b += d;
            }
            let xrow = x.row(t);
            for (i, &xv) in xrow.iter().enumerate() {
                let w = &self.w_input.data()[i * h4..(i + 1) * h4];
                dx.data_mut()[t * e + i] = w.iter().zip(&dz).map(|(a, b)| a * b).sum();
                if xv != 0.0 {
                    let gw = &mut grads.w_input.data_mut()[i * h4..(i + 1) * h4];
                    for (g, &d) in gw.iter_mut().zip(&dz) {
                        *g += xv * d;
                    }
                }
            }
            for j in 0..h {
                let w = &self.w_hidden.data()[j * h4..(j + 1) * h4];
                dh[j] = w.iter().zip(&dz).map(|(a, b)| a * b).sum();
                let hv = h_prev[j];
                if hv != 0.0 {
                    let gw = &mut grads.w_hidden.data_mut()[j * h4..(j + 1) * h4];
                    for (g, &d) in gw.iter_mut().zip(&dz) {
                        *g += hv * d;
                    }
                }
            }
        }
        dx
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Returns `(loss, probabilities, d loss / d logits)`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::shape(
            "softmax_cross_entropy",
            format!("label {label} with {} logits", logits.len()),
        ));
    }
    let probs = softmax(logits);
    let loss = -probs[label].max(f64::MIN_POSITIVE).ln();
    let mut grad = probs.clone();
    grad[label] -= 1.0;
    Ok((loss, probs, grad))
}

pub fn concat(parts: &[&[f64]]) -> Vec<f64> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_kernel_conv() {
        let mut conv = Conv1d::zeros(3, 1, 1);
        conv.weight.data_mut().copy_from_slice(&[0.0, 1.0, 0.0]);
        let x = Tensor::from_vec(&[4, 1], vec![1.0, -2.0, 3.5, 4.0]).unwrap();
        assert_eq!(conv.forward(&x).unwrap(), x);
    }

    #[test]
    fn conv_same_padding_edges() {
        let mut conv = Conv1d::zeros(3, 1, 1);
        conv.weight.data_mut().copy_from_slice(&[1.0, 1.0, 1.0]);
        let x = Tensor::from_vec(&[3, 1], vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(conv.forward(&x).unwrap().data(), [3.0, 6.0, 5.0]);
    }

    #[test]
    fn conv_shape_error_names_layer() {
        let conv = Conv1d::zeros(3, 2, 1);
        let err = conv.forward(&Tensor::zeros(&[4, 3])).unwrap_err();
        assert!(err.to_string().contains("conv1d"), "{err}");
    }

    #[test]
    fn maxpool_pairs() {
        let x = Tensor::from_vec(&[4, 1], vec![1.0, 3.0, 2.0, 5.0]).unwrap();
        let (y, arg) = maxpool1d_forward(&x, 2).unwrap();
        assert_eq!(y.data(), [3.0, 5.0]);
        assert_eq!(arg, [1, 3]);
        let x = Tensor::from_vec(&[5, 1], vec![1.0, 3.0, 2.0, 5.0, 9.0]).unwrap();
        assert_eq!(maxpool1d_forward(&x, 2).unwrap().0.data(), [3.0, 5.0]);
    }

    #[test]
    fn softmax_ce_uniform() {
        let (loss, probs, _) = softmax_cross_entropy(&[0.0, 0.0, 0.0], 1).unwrap();
        for p in probs {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!((loss - 3f64.ln()).abs() < 1e-15);
        assert!(softmax_cross_entropy(&[0.0, 0.0], 2).is_err());
    }

    #[test]
    fn softmax_is_stable() {
        let p = softmax(&[1000.0, 1000.0, -1000.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((p[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn lstm_zero_steps_and_zero_params() {
        let lstm = Lstm::zeros(3, 4);
        let (h, _) = lstm.forward(&Tensor::zeros(&[0, 3])).unwrap();
        assert_eq!(h, vec![0.0; 4]);
        let x = Tensor::from_vec(&[2, 3], vec![1.0, -2.0, 0.5, 3.0, 0.1, -0.7]).unwrap();
        let (h, _) = lstm.forward(&x).unwrap();
        assert!(h.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dense_forward() {
        let mut d = Dense::zeros(2, 2);
        d.weight.data_mut().copy_from_slice(&[1.0, 2.0, 3.0, 4.0]);
        d.bias.data_mut().copy_from_slice(&[0.5, -0.5]);
        assert_eq!(d.forward(&[1.0, 1.0]).unwrap(), [4.5, 5.5]);
        assert!(d.forward(&[1.0]).is_err());
    }
}
