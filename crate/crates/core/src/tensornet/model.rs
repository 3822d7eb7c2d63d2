//! The three-branch classifier.
//!
//! ```text
//! one-hot categories [L, K+1] ─ 3 × (Conv1D → ReLU → MaxPool) ─ flatten ─┐
//! MWE member embeddings [n, E] ─ LSTM (final hidden state) ──────────────┼─ concat ─ Dense ─ Dense ─ softmax
//! sentence vector [S] ───────────────────────────────────────────────────┘
//! ```
//!
//! The sentence-only variant keeps the last branch and the head.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    concat, maxpool1d_backward, maxpool1d_forward, relu_backward_inplace, relu_inplace, softmax,
    softmax_cross_entropy, Conv1d, Dense, Lstm, LstmCache,
};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    ThreeBranch,
    SentenceOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: ModelVariant,
    /// Rows of the one-hot input (maximum tokens per tweet).
    pub onehot_len: usize,
    /// Active categories + 1 for `NoMwe`.
    pub onehot_cols: usize,
    pub mwe_embed_dim: usize,
    pub sentence_dim: usize,
    pub conv_filters: Vec<usize>,
    pub kernel: usize,
    pub pool: usize,
    pub lstm_units: usize,
    pub dense_units: usize,
    pub n_classes: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Layer sizes: filters 32/16/8 with kernel 3, LSTM 192, dense 256.
    pub fn new(
        onehot_len: usize,
        onehot_cols: usize,
        mwe_embed_dim: usize,
        sentence_dim: usize,
        n_classes: usize,
        seed: u64,
    ) -> Self {
        ModelConfig {
            variant: ModelVariant::ThreeBranch,
            onehot_len,
            onehot_cols,
            mwe_embed_dim,
            sentence_dim,
            conv_filters: vec![32, 16, 8],
            kernel: 3,
            pool: 2,
            lstm_units: 192,
            dense_units: 256,
            n_classes,
            seed,
        }
    }

    pub fn sentence_only(sentence_dim: usize, n_classes: usize, seed: u64) -> Self {
        ModelConfig {
            variant: ModelVariant::SentenceOnly,
            ..Self::new(0, 0, 0, sentence_dim, n_classes, seed)
        }
    }

    pub fn with_variant(mut self, variant: ModelVariant) -> Self {
        self.variant = variant;
        self
    }

    fn pooled_len(&self) -> usize {
        self.conv_filters
            .iter()
            .fold(self.onehot_len, |len, _| len / self.pool)
    }

    /// Width of the flattened convolutional branch.
    pub fn conv_output_dim(&self) -> usize {
        match self.variant {
            ModelVariant::ThreeBranch => {
                self.pooled_len() * self.conv_filters.last().copied().unwrap_or(0)
            }
            ModelVariant::SentenceOnly => 0,
        }
    }

    pub fn head_input_dim(&self) -> usize {
        match self.variant {
            ModelVariant::ThreeBranch => self.conv_output_dim() + self.lstm_units + self.sentence_dim,
            ModelVariant::SentenceOnly => self.sentence_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(format!("model config: {msg}")));
        if self.n_classes < 2 {
            return bad(format!("n_classes = {} (need ≥ 2)", self.n_classes));
        }
        if self.sentence_dim == 0 || self.dense_units == 0 {
            return bad("sentence_dim and dense_units must be positive".into());
        }
        if self.variant == ModelVariant::ThreeBranch {
            if self.onehot_cols == 0 || self.mwe_embed_dim == 0 || self.lstm_units == 0 {
                return bad("onehot_cols, mwe_embed_dim and lstm_units must be positive".into());
            }
            if self.kernel == 0 || self.pool == 0 || self.conv_filters.contains(&0) {
                return bad("kernel, pool and filters must be positive".into());
            }
            if self.pooled_len() == 0 {
                return bad(format!(
                    "onehot_len {} too short for {} pooling stages of width {}",
                    self.onehot_len,
                    self.conv_filters.len(),
                    self.pool
                ));
            }
        }
        Ok(())
    }
}

/// Inputs of one example. `mwe` holds only the valid rows (`[mwe_len, E]`).
#[derive(Clone, Copy, Debug)]
pub struct ModelInput<'a> {
    pub onehot: &'a Tensor,
    pub mwe: &'a Tensor,
    pub sentence: &'a [f64],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub convs: Vec<Conv1d>,
    pub lstm: Option<Lstm>,
    pub hidden1: Dense,
    pub hidden2: Dense,
    pub output: Dense,
}

/// Intermediate values of one forward pass.
#[derive(Debug)]
pub struct ForwardCache {
    conv_inputs: Vec<Tensor>,
    conv_outputs: Vec<Tensor>,
    pool_argmax: Vec<Vec<usize>>,
    lstm: Option<LstmCache>,
    head_input: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
    pub logits: Vec<f64>,
}

impl Model {
    /// Seeded Glorot-uniform initialization.
    pub fn build(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (convs, lstm) = match config.variant {
            ModelVariant::ThreeBranch => {
                let mut convs = Vec::new();
                let mut channels = config.onehot_cols;
                for &filters in &config.conv_filters {
                    convs.push(Conv1d::init(config.kernel, channels, filters, &mut rng));
                    channels = filters;
                }
                let lstm = Lstm::init(config.mwe_embed_dim, config.lstm_units, &mut rng);
                (convs, Some(lstm))
            }
            ModelVariant::SentenceOnly => (Vec::new(), None),
        };
        let hidden1 = Dense::init(config.head_input_dim(), config.dense_units, &mut rng);
        let hidden2 = Dense::init(config.dense_units, config.dense_units, &mut rng);
        let output = Dense::init(config.dense_units, config.n_classes, &mut rng);
        Ok(Model {
            config,
            convs,
            lstm,
            hidden1,
            hidden2,
            output,
        })
    }

    /// A model of the same shape with every parameter zero (used for gradients).
    pub fn zeros_like(&self) -> Self {
        let mut m = self.clone();
        for (_, t) in m.params_mut() {
            t.fill(0.0);
        }
        m
    }

    /// Named parameter tensors in a fixed order.
    pub fn params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, c) in self.convs.iter().enumerate() {
            out.push((format!("conv{}.weight", i + 1), &c.weight));
            out.push((format!("conv{}.bias", i + 1), &c.bias));
        }
        if let Some(l) = &self.lstm {
            out.push(("lstm.w_input".into(), &l.w_input));
            out.push(("lstm.w_hidden".into(), &l.w_hidden));
            out.push(("lstm.bias".into(), &l.bias));
        }
        for (name, d) in [
            ("dense1", &self.hidden1),
            ("dense2", &self.hidden2),
            ("output", &self.output),
        ] {
            out.push((format!("{name}.weight"), &d.weight));
            out.push((format!("{name}.bias"), &d.bias));
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        for (i, c) in self.convs.iter_mut().enumerate() {
            out.push((format!("conv{}.weight", i + 1), &mut c.weight));
            out.push((format!("conv{}.bias", i + 1), &mut c.bias));
        }
        if let Some(l) = &mut self.lstm {
            out.push(("lstm.w_input".into(), &mut l.w_input));
            out.push(("lstm.w_hidden".into(), &mut l.w_hidden));
            out.push(("lstm.bias".into(), &mut l.bias));
        }
        for (name, d) in [
            ("dense1", &mut self.hidden1),
            ("dense2", &mut self.hidden2),
            ("output", &mut self.output),
        ] {
            out.push((format!("{name}.weight"), &mut d.weight));
            out.push((format!("{name}.bias"), &mut d.bias));
        }
        out
    }

    pub fn n_parameters(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }

    fn check_input(&self, input: &ModelInput<'_>) -> Result<()> {
        let c = &self.config;
        if input.sentence.len() != c.sentence_dim {
            return Err(Error::shape(
                "sentence branch",
                format!("vector length {}, expected {}", input.sentence.len(), c.sentence_dim),
            ));
        }
        if c.variant == ModelVariant::ThreeBranch {
            if input.onehot.shape() != [c.onehot_len, c.onehot_cols] {
                return Err(Error::shape(
                    "one-hot branch",
                    format!(
                        "input {:?}, expected [{}, {}]",
                        input.onehot.shape(),
                        c.onehot_len,
                        c.onehot_cols
                    ),
                ));
            }
            if input.mwe.rows() > 0 && input.mwe.cols() != c.mwe_embed_dim {
                return Err(Error::shape(
                    "embedding branch",
                    format!(
                        "input {:?}, expected [n, {}]",
                        input.mwe.shape(),
                        c.mwe_embed_dim
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn forward(&self, input: &ModelInput<'_>) -> Result<ForwardCache> {
        self.check_input(input)?;
        let mut conv_inputs = Vec::with_capacity(self.convs.len());
        let mut conv_outputs = Vec::with_capacity(self.convs.len());
        let mut pool_argmax = Vec::with_capacity(self.convs.len());
        let mut flat = Vec::new();
        let mut lstm_cache = None;
        let mut lstm_h = Vec::new();
        if let Some(lstm) = &self.lstm {
            let mut x = input.onehot.clone();
            for conv in &self.convs {
                let mut y = conv.forward(&x)?;
                relu_inplace(y.data_mut());
                let (pooled, argmax) = maxpool1d_forward(&y, self.config.pool)?;
                conv_inputs.push(x);
                conv_outputs.push(y);
                pool_argmax.push(argmax);
                x = pooled;
            }
            flat = x.into_data();
            let (h, cache) = lstm.forward(input.mwe)?;
            lstm_h = h;
            lstm_cache = Some(cache);
        }
        let head_input = concat(&[&flat, &lstm_h, input.sentence]);
        let mut h1 = self.hidden1.forward(&head_input)?;
        relu_inplace(&mut h1);
        let mut h2 = self.hidden2.forward(&h1)?;
        relu_inplace(&mut h2);
        let logits = self.output.forward(&h2)?;
        Ok(ForwardCache {
            conv_inputs,
            conv_outputs,
            pool_argmax,
            lstm: lstm_cache,
            head_input,
            h1,
            h2,
            logits,
        })
    }

    pub fn logits(&self, input: &ModelInput<'_>) -> Result<Vec<f64>> {
        Ok(self.forward(input)?.logits)
    }

    pub fn probabilities(&self, input: &ModelInput<'_>) -> Result<Vec<f64>> {
        Ok(softmax(&self.forward(input)?.logits))
    }

    /// Argmax class (ties go to the lowest index) and the class probabilities.
    pub fn predict(&self, input: &ModelInput<'_>) -> Result<(usize, Vec<f64>)> {
        let probs = self.probabilities(input)?;
        Ok((argmax(&probs), probs))
    }

    /// Backpropagates `d loss / d logits`, adding parameter gradients to
    /// `grads`. Returns the gradients w.r.t. the one-hot, MWE and sentence inputs.
    pub fn backward(
        &self,
        input: &ModelInput<'_>,
        cache: &ForwardCache,
        grad_logits: &[f64],
        grads: &mut Model,
    ) -> (Tensor, Tensor, Vec<f64>) {
        let mut d_h2 = self.output.backward(&cache.h2, grad_logits, &mut grads.output);
        relu_backward_inplace(&mut d_h2, &cache.h2);
        let mut d_h1 = self.hidden2.backward(&cache.h1, &d_h2, &mut grads.hidden2);
        relu_backward_inplace(&mut d_h1, &cache.h1);
        let d_head = self
            .hidden1
            .backward(&cache.head_input, &d_h1, &mut grads.hidden1);

        let conv_dim = self.config.conv_output_dim();
        let lstm_dim = if self.lstm.is_some() {
            self.config.lstm_units
        } else {
            0
        };
        let d_sentence = d_head[conv_dim + lstm_dim..].to_vec();
        let mut d_onehot = Tensor::zeros(input.onehot.shape());
        let mut d_mwe = Tensor::zeros(input.mwe.shape());

        if let (Some(lstm), Some(lstm_cache)) = (&self.lstm, &cache.lstm) {
            let g_lstm = grads.lstm.as_mut().expect("gradient model has an LSTM");
            d_mwe = lstm.backward(
                input.mwe,
                lstm_cache,
                &d_head[conv_dim..conv_dim + lstm_dim],
                g_lstm,
            );

            let last = self.convs.len() - 1;
            let pooled_shape = [
                cache.conv_outputs[last].rows() / self.config.pool,
                self.convs[last].out_channels(),
            ];
            let mut grad = Tensor::from_vec(&pooled_shape, d_head[..conv_dim].to_vec())
                .expect("flattened conv width matches config");
            for (i, conv) in self.convs.iter().enumerate().rev() {
                let y = &cache.conv_outputs[i];
                let mut d_y = maxpool1d_backward(&grad, &cache.pool_argmax[i], y.shape());
                relu_backward_inplace(d_y.data_mut(), y.data());
                grad = conv.backward(&cache.conv_inputs[i], &d_y, &mut grads.convs[i]);
            }
            d_onehot = grad;
        }
        (d_onehot, d_mwe, d_sentence)
    }

    /// Loss for one labelled example, accumulating parameter gradients.
    pub fn loss_and_grad(
        &self,
        input: &ModelInput<'_>,
        label: usize,
        grads: &mut Model,
    ) -> Result<f64> {
        let cache = self.forward(input)?;
        let (loss, _, d_logits) = softmax_cross_entropy(&cache.logits, label)?;
        self.backward(input, &cache, &d_logits, grads);
        Ok(loss)
    }

    pub fn loss(&self, input: &ModelInput<'_>, label: usize) -> Result<f64> {
        let cache = self.forward(input)?;
        Ok(softmax_cross_entropy(&cache.logits, label)?.0)
    }

    /// Zeroes every parameter of the one-hot and embedding branches.
    pub fn zero_mwe_branches(&mut self) {
        for conv in &mut self.convs {
            conv.weight.fill(0.0);
            conv.bias.fill(0.0);
        }
        if let Some(lstm) = &mut self.lstm {
            lstm.w_input.fill(0.0);
            lstm.w_hidden.fill(0.0);
            lstm.bias.fill(0.0);
        }
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub dev_macro_f1: Option<f64>,
    pub float_width: u32,
    /// Caller-defined settings needed to rebuild inputs (feature layout etc.).
    #[serde(default)]
    pub extra: serde_json::Value,
}

/// Serialized model: config, named parameters and training metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub tensors: Vec<NamedTensor>,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn from_model(model: &Model, meta: CheckpointMeta) -> Self {
        Checkpoint {
            config: model.config.clone(),
            tensors: model
                .params()
                .into_iter()
                .map(|(name, t)| NamedTensor {
                    name,
                    shape: t.shape().to_vec(),
                    data: t.data().to_vec(),
                })
                .collect(),
            meta: CheckpointMeta {
                float_width: 64,
                ..meta
            },
        }
    }

    pub fn to_model(&self) -> Result<Model> {
        let mut model = Model::build(self.config.clone())?;
        let mut params = model.params_mut();
        if params.len() != self.tensors.len() {
            return Err(Error::invalid(format!(
                "checkpoint has {} tensors, model expects {}",
                self.tensors.len(),
                params.len()
            )));
        }
        for ((name, t), saved) in params.iter_mut().zip(&self.tensors) {
            if *name != saved.name || t.shape() != saved.shape.as_slice() {
                return Err(Error::invalid(format!(
                    "checkpoint tensor {} {:?} does not match model tensor {} {:?}",
                    saved.name,
                    saved.shape,
                    name,
                    t.shape()
                )));
            }
            **t = Tensor::from_vec(&saved.shape, saved.data.clone())?;
        }
        Ok(model)
    }

    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer(out, self)?;
        Ok(())
    }

    pub fn read<R: Read>(input: R) -> Result<Self> {
        Ok(serde_json::from_reader(input)?)
    }
}
