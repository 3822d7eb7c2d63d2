//! Central finite-difference verification of the analytic gradients.
//!
//! Layers are checked against a random linear read-out of their output
//! (`sum(r ⊙ y)`), the composite model against its cross-entropy loss.
//! All parameters and inputs are drawn from a seeded generator; biases are
//! randomized too so that no ReLU sits exactly on its kink.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{Conv1d, Dense, Lstm};
use super::model::{Model, ModelConfig, ModelInput};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Gradients smaller than this are compared in absolute terms.
pub const RELATIVE_FLOOR: f64 = 1e-8;

/// Maximum coordinates checked per tensor in the composite model.
const COMPOSITE_SAMPLES: usize = 24;

#[derive(Clone, Debug)]
pub enum GradCheckTarget {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Conv1d {
        len: usize,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
    },
    Lstm {
        steps: usize,
        input_dim: usize,
        hidden: usize,
    },
    /// Whole network; the seed inside `config` is ignored.
    Composite { config: ModelConfig, mwe_len: usize },
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
    (analytic - numeric).abs() / denom
}

fn random_tensor(shape: &[usize], scale: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for x in t.data_mut() {
        *x = rng.gen_range(-scale..scale);
    }
    t
}

fn randomize(t: &mut Tensor, scale: f64, rng: &mut ChaCha8Rng) {
    for x in t.data_mut() {
        *x = rng.gen_range(-scale..scale);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Compares `analytic` with central differences of `objective` over every
/// coordinate of `values`, returning the largest relative error.
fn check_all(
    values: &mut [f64],
    analytic: &[f64],
    eps: f64,
    mut objective: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for j in 0..values.len() {
        let saved = values[j];
        values[j] = saved + eps;
        let plus = objective(values)?;
        values[j] = saved - eps;
        let minus = objective(values)?;
        values[j] = saved;
        worst = worst.max(relative_error(analytic[j], (plus - minus) / (2.0 * eps)));
    }
    Ok(worst)
}

/// Runs one randomized check and returns the maximum relative error.
pub fn grad_check(target: &GradCheckTarget, eps: f64, seed: u64) -> Result<f64> {
    if eps <= 0.0 {
        return Err(Error::invalid("eps must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match *target {
        GradCheckTarget::Dense { inputs, outputs } => {
            let mut layer = Dense::zeros(inputs, outputs);
            randomize(&mut layer.weight, 0.5, &mut rng);
            randomize(&mut layer.bias, 0.5, &mut rng);
            let x = random_tensor(&[inputs], 1.0, &mut rng).into_data();
            let r = random_tensor(&[outputs], 1.0, &mut rng).into_data();
            let mut grads = Dense::zeros(inputs, outputs);
            let dx = layer.backward(&x, &r, &mut grads);

            let mut worst = 0.0f64;
            let mut xv = x.clone();
            worst = worst.max(check_all(&mut xv, &dx, eps, |v| {
                Ok(dot(&layer.forward(v)?, &r))
            })?);
            let mut w = layer.weight.clone();
            worst = worst.max(check_all(w.data_mut(), grads.weight.data(), eps, |v| {
                let mut l = layer.clone();
                l.weight.data_mut().copy_from_slice(v);
                Ok(dot(&l.forward(&x)?, &r))
            })?);
            let mut b = layer.bias.clone();
            worst = worst.max(check_all(b.data_mut(), grads.bias.data(), eps, |v| {
                let mut l = layer.clone();
                l.bias.data_mut().copy_from_slice(v);
                Ok(dot(&l.forward(&x)?, &r))
            })?);
            Ok(worst)
        }
        GradCheckTarget::Conv1d {
            len,
            in_channels,
            out_channels,
            kernel,
        } => {
            let mut layer = Conv1d::zeros(kernel, in_channels, out_channels);
            randomize(&mut layer.weight, 0.5, &mut rng);
            randomize(&mut layer.bias, 0.5, &mut rng);
            let x = random_tensor(&[len, in_channels], 1.0, &mut rng);
            let r = random_tensor(&[len, out_channels], 1.0, &mut rng);
            let mut grads = Conv1d::zeros(kernel, in_channels, out_channels);
            let dx = layer.backward(&x, &r, &mut grads);

            let read_out = |l: &Conv1d, x: &Tensor| -> Result<f64> {
                Ok(dot(l.forward(x)?.data(), r.data()))
            };
            let mut worst = 0.0f64;
            let mut xv = x.clone();
            worst = worst.max(check_all(xv.data_mut(), dx.data(), eps, |v| {
                let t = Tensor::from_vec(x.shape(), v.to_vec())?;
                read_out(&layer, &t)
            })?);
            let mut w = layer.weight.clone();
            worst = worst.max(check_all(w.data_mut(), grads.weight.data(), eps, |v| {
                let mut l = layer.clone();
                l.weight.data_mut().copy_from_slice(v);
                read_out(&l, &x)
            })?);
            let mut b = layer.bias.clone();
            worst = worst.max(check_all(b.data_mut(), grads.bias.data(), eps, |v| {
                let mut l = layer.clone();
                l.bias.data_mut().copy_from_slice(v);
                read_out(&l, &x)
            })?);
            Ok(worst)
        }
        GradCheckTarget::Lstm {
            steps,
            input_dim,
            hidden,
        } => {
            let mut layer = Lstm::zeros(input_dim, hidden);
            randomize(&mut layer.w_input, 0.5, &mut rng);
            randomize(&mut layer.w_hidden, 0.5, &mut rng);
            randomize(&mut layer.bias, 0.5, &mut rng);
            let x = random_tensor(&[steps, input_dim], 1.0, &mut rng);
            let r = random_tensor(&[hidden], 1.0, &mut rng).into_data();
            let (_, cache) = layer.forward(&x)?;
            let mut grads = Lstm::zeros(input_dim, hidden);
            let dx = layer.backward(&x, &cache, &r, &mut grads);

            let read_out = |l: &Lstm, x: &Tensor| -> Result<f64> { Ok(dot(&l.forward(x)?.0, &r)) };
            let mut worst = 0.0f64;
            let mut xv = x.clone();
            worst = worst.max(check_all(xv.data_mut(), dx.data(), eps, |v| {
                let t = Tensor::from_vec(x.shape(), v.to_vec())?;
                read_out(&layer, &t)
            })?);
            for (which, analytic) in [
                (0, grads.w_input.data()),
                (1, grads.w_hidden.data()),
                (2, grads.bias.data()),
            ] {
                let mut values = match which {
                    0 => layer.w_input.clone(),
                    1 => layer.w_hidden.clone(),
                    _ => layer.bias.clone(),
                };
                worst = worst.max(check_all(values.data_mut(), analytic, eps, |v| {
                    let mut l = layer.clone();
                    let target = match which {
                        0 => &mut l.w_input,
                        1 => &mut l.w_hidden,
                        _ => &mut l.bias,
                    };
                    target.data_mut().copy_from_slice(v);
                    read_out(&l, &x)
                })?);
            }
            Ok(worst)
        }
        GradCheckTarget::Composite {
            ref config,
            mwe_len,
        } => composite_check(config, mwe_len, eps, &mut rng),
    }
}

fn composite_check(
    config: &ModelConfig,
    mwe_len: usize,
    eps: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut model = Model::build(config.clone())?;
    for (_, t) in model.params_mut() {
        randomize(t, 0.3, rng);
    }
    let mut onehot = Tensor::zeros(&[config.onehot_len, config.onehot_cols]);
    for x in onehot.data_mut() {
        *x = rng.gen_range(0.0..1.0);
    }
    let mut mwe = random_tensor(&[mwe_len, config.mwe_embed_dim], 1.0, rng);
    let mut sentence = random_tensor(&[config.sentence_dim], 1.0, rng).into_data();
    let label = rng.gen_range(0..config.n_classes);

    let mut grads = model.zeros_like();
    let (d_onehot, d_mwe, d_sentence) = {
        let input = ModelInput {
            onehot: &onehot,
            mwe: &mwe,
            sentence: &sentence,
        };
        let cache = model.forward(&input)?;
        let (_, _, d_logits) = super::layers::softmax_cross_entropy(&cache.logits, label)?;
        model.backward(&input, &cache, &d_logits, &mut grads)
    };

    let mut worst = 0.0f64;
    let n_tensors = model.params().len();
    for ti in 0..n_tensors {
        let size = model.params()[ti].1.len();
        let picks: Vec<usize> = if size <= COMPOSITE_SAMPLES {
            (0..size).collect()
        } else {
            (0..COMPOSITE_SAMPLES).map(|_| rng.gen_range(0..size)).collect()
        };
        for j in picks {
            let analytic = grads.params()[ti].1.data()[j];
            let saved = model.params()[ti].1.data()[j];
            let eval = |value: f64, model: &mut Model| -> Result<f64> {
                model.params_mut()[ti].1.data_mut()[j] = value;
                model.loss(
                    &ModelInput {
                        onehot: &onehot,
                        mwe: &mwe,
                        sentence: &sentence,
                    },
                    label,
                )
            };
            let plus = eval(saved + eps, &mut model)?;
            let minus = eval(saved - eps, &mut model)?;
            eval(saved, &mut model)?;
            worst = worst.max(relative_error(analytic, (plus - minus) / (2.0 * eps)));
        }
    }

    let loss_at = |onehot: &Tensor, mwe: &Tensor, sentence: &[f64]| {
        model.loss(
            &ModelInput {
                onehot,
                mwe,
                sentence,
            },
            label,
        )
    };
    let (oh, mw, se) = (onehot.clone(), mwe.clone(), sentence.clone());
    worst = worst.max(check_all(onehot.data_mut(), d_onehot.data(), eps, |v| {
        loss_at(&Tensor::from_vec(oh.shape(), v.to_vec())?, &mw, &se)
    })?);
    worst = worst.max(check_all(mwe.data_mut(), d_mwe.data(), eps, |v| {
        loss_at(&oh, &Tensor::from_vec(mw.shape(), v.to_vec())?, &se)
    })?);
    worst = worst.max(check_all(&mut sentence, &d_sentence, eps, |v| {
        loss_at(&oh, &mw, v)
    })?);
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_gradients() {
        let err = grad_check(&GradCheckTarget::Dense { inputs: 5, outputs: 4 }, 1e-5, 1).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn lstm_gradients() {
        let target = GradCheckTarget::Lstm {
            steps: 3,
            input_dim: 4,
            hidden: 5,
        };
        let err = grad_check(&target, 1e-5, 2).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn conv_gradients() {
        let target = GradCheckTarget::Conv1d {
            len: 6,
            in_channels: 3,
            out_channels: 4,
            kernel: 3,
        };
        let err = grad_check(&target, 1e-5, 3).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn detects_a_wrong_gradient() {
        assert!(relative_error(1.0, 1.1) > 1e-4);
        assert_eq!(relative_error(0.0, 0.0), 0.0);
    }

    #[test]
    fn rejects_non_positive_eps() {
        assert!(grad_check(&GradCheckTarget::Dense { inputs: 1, outputs: 1 }, 0.0, 1).is_err());
    }
}
