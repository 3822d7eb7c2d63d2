//! Mini-batch training with Adam and early stopping on validation macro-F1.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{Model, ModelInput};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::metrics;

/// A labelled model input.
pub trait Example {
    fn input(&self) -> ModelInput<'_>;
    fn label(&self) -> usize;
}

/// Owned example, convenient for tests and synthetic data.
#[derive(Clone, Debug)]
pub struct LabeledInput {
    pub onehot: Tensor,
    pub mwe: Tensor,
    pub sentence: Vec<f64>,
    pub label: usize,
}

impl Example for LabeledInput {
    fn input(&self) -> ModelInput<'_> {
        ModelInput {
            onehot: &self.onehot,
            mwe: &self.mwe,
            sentence: &self.sentence,
        }
    }

    fn label(&self) -> usize {
        self.label
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 30,
            patience: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val_macro_f1: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose weights were restored.
    pub best_epoch: usize,
    pub best_val_macro_f1: f64,
}

/// Adam optimizer state.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(model: &Model, lr: f64) -> Self {
        let zeros: Vec<Tensor> = model
            .params()
            .iter()
            .map(|(_, t)| Tensor::zeros(t.shape()))
            .collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, model: &mut Model, grads: &Model) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        let grads = grads.params();
        for (i, (_, param)) in model.params_mut().into_iter().enumerate() {
            let g = grads[i].1.data();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (j, p) in param.data_mut().iter_mut().enumerate() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

pub fn predict_all<E: Example>(model: &Model, data: &[E]) -> Result<Vec<usize>> {
    data.iter()
        .map(|e| model.predict(&e.input()).map(|(c, _)| c))
        .collect()
}

fn macro_f1_of<E: Example>(model: &Model, data: &[E]) -> Result<f64> {
    let pred = predict_all(model, data)?;
    let gold: Vec<usize> = data.iter().map(Example::label).collect();
    let cm = metrics::confusion_matrix(&gold, &pred, model.config.n_classes)?;
    Ok(metrics::macro_f1(&cm))
}

/// Trains `model` and returns the weights of the best validation epoch.
///
/// Batches are drawn from a shuffle seeded by the model seed and gradients
/// are summed in example order, so a run is reproducible bit for bit. An
/// empty validation set falls back to the training set for model selection.
pub fn train<E: Example>(
    mut model: Model,
    train_set: &[E],
    val_set: &[E],
    params: &TrainParams,
) -> Result<(Model, History)> {
    if train_set.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    if params.batch_size == 0 || params.max_epochs == 0 {
        return Err(Error::invalid("batch_size and max_epochs must be positive"));
    }
    if let Some(e) = train_set
        .iter()
        .chain(val_set)
        .find(|e| e.label() >= model.config.n_classes)
    {
        return Err(Error::invalid(format!(
            "label {} outside {} classes",
            e.label(),
            model.config.n_classes
        )));
    }
    let selection_set = if val_set.is_empty() { train_set } else { val_set };
    let mut rng = ChaCha8Rng::seed_from_u64(model.config.seed ^ 0x5eed_5eed_5eed_5eed);
    let mut optimizer = Adam::new(&model, params.learning_rate);
    let mut grads = model.zeros_like();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = History {
        best_val_macro_f1: f64::NEG_INFINITY,
        ..History::default()
    };
    let mut best_model = model.clone();
    let mut since_best = 0;

    for epoch in 1..=params.max_epochs {
        order.shuffle(&mut rng);
        let mut total_loss = 0.0;
        for batch in order.chunks(params.batch_size) {
            for (_, g) in grads.params_mut() {
                g.fill(0.0);
            }
            for &i in batch {
                let example = &train_set[i];
                total_loss += model.loss_and_grad(&example.input(), example.label(), &mut grads)?;
            }
            let scale = 1.0 / batch.len() as f64;
            for (_, g) in grads.params_mut() {
                g.scale(scale);
            }
            optimizer.step(&mut model, &grads);
        }
        let val_macro_f1 = macro_f1_of(&model, selection_set)?;
        history.epochs.push(EpochRecord {
            epoch,
            loss: total_loss / train_set.len() as f64,
            val_macro_f1,
        });
        if val_macro_f1 > history.best_val_macro_f1 {
            history.best_val_macro_f1 = val_macro_f1;
            history.best_epoch = epoch;
            best_model = model.clone();
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best >= params.patience {
            break;
        }
    }
    Ok((best_model, history))
}
