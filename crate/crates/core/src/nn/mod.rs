//! LSTM cell, stacked and bidirectional sequence layers, and the dense head.
//!
//! Windows start from zero hidden and cell state. The stacked variant feeds every
//! intermediate layer's full hidden sequence upward and keeps only the final hidden
//! state of the top layer. The bidirectional variant runs a second, independently
//! parameterized stack over the time-reversed window and concatenates both final
//! states. The dense head emits raw logits; softmax lives in [`crate::loss`].

mod cell;
mod params;
mod sequence;

use thiserror::Error;

use crate::linalg::LinalgError;

pub use cell::{cell_backward, cell_forward, cell_step, CellCache};
pub use params::{init_params, Architecture, LstmCellParams, LstmParams, ParamGrads};
pub use sequence::{backward_sequence, forward_sequence, ForwardTrace, SequenceBatch};

#[derive(Debug, Error)]
pub enum NnError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("trace does not match parameters: {0}")]
    TraceMismatch(String),
}
