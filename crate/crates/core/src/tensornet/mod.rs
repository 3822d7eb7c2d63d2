//! Minimal dense-tensor network stack: layers with hand-written backward
//! passes, the three-branch classifier, Adam training and gradient checks.

pub mod gradcheck;
pub mod layers;
pub mod model;
pub mod tensor;
pub mod train;

pub use gradcheck::{grad_check, GradCheckTarget};
pub use model::{argmax, Checkpoint, CheckpointMeta, Model, ModelConfig, ModelInput, ModelVariant};
pub use tensor::Tensor;
pub use train::{predict_all, train, EpochRecord, Example, History, LabeledInput, TrainParams};
