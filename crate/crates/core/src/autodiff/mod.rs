//! Minimal reverse-mode automatic differentiation over small dense tensors.
//!
//! One [`Tape`] lives for one training step: the forward pass records every
//! operation, `backward` replays the record in reverse, and the tape is then
//! discarded. Everything is `f64`; the sizes here are desk-scale and the
//! gradient checks want the headroom.

mod optim;
mod tape;
mod tensor;

pub use optim::{Optimizer, OptimizerKind, ParamId, ParamSet, Parameter};
pub use tape::{GradientMap, Tape, ValueId};
pub use tensor::Tensor;

use thiserror::Error;

/// Errors raised by tape construction, backward passes, and optimizer steps.
#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: left {left:?}, right {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op} expects rank-{expected} input, got shape {got:?}")]
    BadRank {
        op: &'static str,
        expected: usize,
        got: Vec<usize>,
    },
    #[error("tensor shape {shape:?} holds {expected} values, got {got}")]
    BadValueCount {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("target index {index} out of range for {classes} classes")]
    TargetOutOfRange { index: usize, classes: usize },
    #[error("embedding index {index} out of range for table of {rows} rows")]
    EmbeddingIndexOutOfRange { index: usize, rows: usize },
    #[error("gradient reversal requires lambda >= 0, got {0}")]
    NegativeLambda(f64),
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("optimizer step without populated gradients")]
    MissingGradients,
    #[error("segment lengths sum to {sum}, input has {rows} rows")]
    BadSegments { sum: usize, rows: usize },
    #[error("{op} requires at least one input")]
    EmptyInput { op: &'static str },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
}

pub type Result<T> = std::result::Result<T, AutodiffError>;
