//! Small dense/LSTM network core with tape-based reverse-mode gradients.

mod adam;
mod checkpoint;
mod layers;
mod tape;
mod tensor;
mod transform;

use thiserror::Error;

pub use adam::Adam;
pub use checkpoint::{read_params, write_params};
pub use layers::{Lstm, Mlp};
pub use tape::{log_softmax, sigmoid, softmax, Tape, Var};
pub use tensor::{ParamId, ParameterSet, Tensor};
pub use transform::{
    from_categorical, inverse_scale, scale_transform, to_categorical, SupportSpec, SCALE_EPS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("variable does not belong to this tape")]
    Detached,
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[cfg(test)]
mod tests;
