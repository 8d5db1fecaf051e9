//! Full-batch training with annealed regularization and validation-based
//! model selection.

mod adam;
mod fit;
mod schedule;

use thiserror::Error;

pub use adam::{adam_step, AdamState, OptimConfig};
pub use fit::{accuracy, evaluate, evaluate_logits, fit, noise_seed, EpochRecord, TrainState};
pub use schedule::{beta_at, Schedule};

use crate::bounds::{BoundError, LossReport};
use crate::gibnn::GibError;
use crate::numcore::NumError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Model(#[from] GibError),
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error("schedule needs at least 4 epochs, got {0}")]
    ShortSchedule(usize),
    #[error("epoch {epoch}: non-finite loss ({})", .report.to_json_line())]
    NonFiniteLoss {
        epoch: usize,
        report: Box<LossReport>,
    },
    #[error("epoch {epoch}: non-finite gradient in parameter {param}")]
    NonFiniteGradient { epoch: usize, param: usize },
    #[error("gradient {index} has shape {got:?}, parameter has {expected:?}")]
    GradientShape {
        index: usize,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("mask selects no nodes")]
    EmptyMask,
    #[error("writing training log: {0}")]
    Log(#[from] std::io::Error),
}

#[cfg(test)]
mod tests;
