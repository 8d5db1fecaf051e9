//! Dense `f64` tensors with a reverse-mode differentiation tape.
//!
//! A [`Tape`] is rebuilt for every forward pass. Leaves created with
//! [`Tape::leaf`] are tracked; [`Tape::constant`] values are not. Each
//! operation appends a node whose inputs precede it, so a single reverse
//! sweep in [`Tape::backward`] accumulates gradients for every tracked leaf.

mod backward;
mod gradcheck;
mod ops;
mod tape;
mod tensor;

use thiserror::Error;

pub use backward::{fault, Gradients};
pub use gradcheck::{finite_diff_check, relative_error};
pub(crate) use ops::{log_sum_exp, softplus as softplus_value};
pub use ops::{BinaryKind, UnaryKind};
pub use tape::{Segments, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: domain violation at flat index {index} (value {value})")]
    Domain {
        op: &'static str,
        index: usize,
        value: f64,
    },
    #[error("softmax: row {row} has no unmasked entries")]
    FullyMasked { row: usize },
    #[error("{op}: index {index} out of range for size {bound}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("slice {start}..{end} out of bounds for last dimension {dim}")]
    SliceBounds {
        start: usize,
        end: usize,
        dim: usize,
    },
    #[error("backward root must be a scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("function value is not finite at probe {probe}: {value}")]
    NonFinite { probe: usize, value: f64 },
    #[error("finite-difference step must be positive, got {0}")]
    InvalidStep(f64),
}
