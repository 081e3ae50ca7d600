//! Reverse-mode automatic differentiation over small dense tensors.
//!
//! Model code is written once against the [`Backend`] trait and runs either
//! on a [`Tape`] (recording for gradients) or on [`Eager`] (plain evaluation,
//! no bookkeeping). Both share the forward kernels on [`Tensor`], so the two
//! paths produce bitwise-identical values.

mod backend;
mod tape;
mod tensor;

pub use backend::{Backend, Eager};
pub use tape::{Grad, NodeId, Op, Tape, ATAN2_ORIGIN_RADIUS};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op} expects rank {expected}, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: &'static str,
        shape: Vec<usize>,
    },
    #[error("data length {len} does not match shape {shape:?}")]
    Length { shape: Vec<usize>, len: usize },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("expected a scalar, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("node {0} is not on this tape")]
    UnknownNode(usize),
    #[error("slice {start}..{end} out of range for length {len}")]
    SliceRange { start: usize, end: usize, len: usize },
    #[error("{op} needs at least one input")]
    Empty { op: &'static str },
    #[error("leaves are created with param/constant, not record")]
    Leaf,
}
