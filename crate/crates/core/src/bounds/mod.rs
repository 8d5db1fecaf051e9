//! Variational bounds used by the objective, plus exact oracles on small
//! discrete joints.
//!
//! Every information quantity is in nats. Functions come in two flavors:
//! plain value functions over tensors, and `*_on` builders that record the
//! same quantity on a tape for differentiation.

mod ce;
mod kl;
mod total;
mod toy;
mod xib;

use thiserror::Error;

pub use ce::{ce_bound, ce_on, contrastive_bound, contrastive_on, random_structure};
pub use kl::{aib_bern, aib_bern_on, aib_cat, aib_cat_on, kl_cat, AibBern, PROB_CLAMP};
pub use total::{total_loss, total_loss_on, LossReport, LossVars};
pub use toy::{mi_bruteforce, nwj_bound_eval, ToyJoint};
pub use xib::{xib, xib_on};

use crate::gibnn::GibError;
use crate::graphio::GraphError;
use crate::numcore::NumError;

#[derive(Debug, Error)]
pub enum BoundError {
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Model(#[from] GibError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("segment {segment} column {column}: probabilities sum to {sum}")]
    NotNormalized {
        segment: usize,
        column: usize,
        sum: f64,
    },
    #[error("{what} = {value} outside its valid range")]
    OutOfRange { what: &'static str, value: f64 },
    #[error("non-positive variance {value} at index {index}")]
    NonPositiveVariance { index: usize, value: f64 },
    #[error("mask selects no nodes")]
    EmptyMask,
    #[error("random structure has {got} edges, expected {expected}")]
    EdgeCountMismatch { expected: usize, got: usize },
    #[error("invalid table: {0}")]
    InvalidTable(String),
    #[error("{what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}
