//! Tape-based autograd and the transformer pieces the detectors are built from.

mod adam;
mod checkpoint;
mod graph;
mod layers;
mod params;

pub use adam::{Adam, BETA1, BETA2, EPS};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use graph::{masked_softmax_rows, Graph, Mat, Tensor, Var};
pub use layers::{
    sinusoidal_positions, AttentionConfig, DecoderBlock, EncoderBlock, LayerNorm, Linear,
    AttentionTrace, MultiHeadAttention, LN_EPS,
};
pub use params::{ParamId, ParamStore};

pub(crate) use graph::sigmoid;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("every key position is masked")]
    AllMasked,
    #[error("backward needs a [1 x 1] loss, got {0:?}")]
    NotScalar((usize, usize)),
    #[error("loss does not depend on any trainable tensor")]
    DetachedGraph,
    #[error("non-finite value produced at tape position {0}")]
    NonFinite(usize),
    #[error("positional encoding needs an even dimension, got {0}")]
    OddDim(usize),
    #[error("invalid attention config: {0}")]
    BadConfig(String),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint does not fit the model: {0}")]
    CheckpointMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn shape_err(expected: impl std::fmt::Display, got: (usize, usize)) -> NnError {
    NnError::ShapeMismatch {
        expected: expected.to_string(),
        got: format!("{}x{}", got.0, got.1),
    }
}
