//! Reverse-mode automatic differentiation over dense `f64` tensors, with Adam.

mod adam;
mod gradcheck;
mod tape;
mod tensor;

use thiserror::Error;

pub use adam::{clip_global_norm, AdamConfig, AdamState};
pub use gradcheck::{grad_check, GradCheckReport, REL_ERROR_FLOOR};
pub use tape::{softmax, Gradients, Op, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: incompatible shapes {shapes:?}")]
    ShapeMismatch { op: &'static str, shapes: Vec<Vec<usize>> },
    #[error("mean_rows over zero rows")]
    EmptyMean,
    #[error("shape {shape:?} does not hold {len} values")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{op}: index {index} out of range (bound {bound})")]
    IndexOutOfRange { op: &'static str, index: usize, bound: usize },
    #[error("backward root must be scalar, got shape {shape:?}")]
    NonScalarRoot { shape: Vec<usize> },
    #[error("variable {0} is not on this tape")]
    UnknownVar(usize),
    #[error("non-finite gradient for parameter {param}")]
    NonFiniteGradient { param: usize },
    #[error("optimizer state mismatch (params {params}, grads {grads}, state {state})")]
    Congruence { params: usize, grads: usize, state: usize },
}
