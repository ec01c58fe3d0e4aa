//! A small dense network engine: ReLU hidden layers, a softmax output,
//! categorical cross-entropy, backpropagation and Adam.

mod adam;
mod model;
mod train;

pub use adam::{AdamConfig, AdamState};
pub use model::{
    cross_entropy, init_model, one_hot, Activation, DenseLayer, Gradients, InitSpec, MlpModel, PROB_FLOOR,
};
pub use train::{argmax, evaluate, input_matrix, predict, train, EpochStats, Trainer, TrainingConfig};

/// Default hidden layer width.
pub const DEFAULT_HIDDEN_WIDTH: usize = 784;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("model configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("training data: {0}")]
    Data(String),
}
