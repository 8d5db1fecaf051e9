use std::sync::Arc;

use super::ops::{BinaryKind, UnaryKind};
use super::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Contiguous grouping of rows: segment `s` covers rows `offsets[s]..offsets[s + 1]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segments {
    offsets: Arc<[usize]>,
}

impl Segments {
    /// `offsets` must start at 0 and be non-decreasing.
    pub fn from_offsets(offsets: Vec<usize>) -> Self {
        debug_assert!(offsets.first().copied().unwrap_or(0) == 0);
        debug_assert!(offsets.windows(2).all(|w| w[0] <= w[1]));
        Self {
            offsets: offsets.into(),
        }
    }

    /// Builds segments from per-segment lengths.
    pub fn from_lengths(lengths: impl IntoIterator<Item = usize>) -> Self {
        let mut offsets = vec![0];
        let mut acc = 0;
        for len in lengths {
            acc += len;
            offsets.push(acc);
        }
        Self::from_offsets(offsets)
    }

    pub fn count(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn total(&self) -> usize {
        self.offsets.last().copied().unwrap_or(0)
    }

    pub fn range(&self, s: usize) -> std::ops::Range<usize> {
        self.offsets[s]..self.offsets[s + 1]
    }

    pub fn len_of(&self, s: usize) -> usize {
        self.offsets[s + 1] - self.offsets[s]
    }

    pub fn iter(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        self.offsets.windows(2).map(|w| w[0]..w[1])
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Unary(Var, UnaryKind),
    Binary(Var, Var, BinaryKind),
    Scale(Var, f64),
    AddScalar(Var),
    SumAll(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    LogSumExpRows(Var),
    SegmentSum(Var, Arc<[usize]>),
    GatherRows(Var, Arc<[usize]>),
    SegmentSoftmax(Var, Segments),
    SegmentLogSoftmax(Var, Segments),
    WeightedAggregate {
        z: Var,
        w: Var,
        src: Arc<[usize]>,
        dst: Arc<[usize]>,
    },
    SelectCols(Var, Arc<[usize]>),
    Concat(Vec<Var>),
    Slice(Var, usize),
}

pub(crate) struct Node {
    pub(crate) value: Tensor,
    pub(crate) op: Op,
    pub(crate) requires_grad: bool,
}

/// Append-only record of a forward computation.
#[derive(Default)]
pub struct Tape {
    pub(crate) nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Tracked input; gradients are reported for it.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, true)
    }

    /// Untracked input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub(crate) fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push_raw(value, op, requires_grad)
    }

    fn push_raw(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }
}
