//! Robustness protocols: random feature noise, a cross-class edge-injection
//! attack on single targets, margin-based target selection, and evasive or
//! poisoning evaluation runs.

mod attack;
mod protocol;
mod report;
mod targets;

use thiserror::Error;

pub use attack::{feature_noise_attack, feature_scale, proxy_structural_attack};
pub use protocol::{
    run_protocol, run_sweep, AttackKind, AttackMode, AttackSpec, ModelSpec, ProtocolSettings,
};
pub use report::{Outcome, ReportRow, RobustReport, TargetResult};
pub use targets::{margins, pick_targets, select_targets, TargetCounts};

use crate::gibnn::GibError;
use crate::graphio::GraphError;
use crate::train::TrainError;

#[derive(Debug, Error)]
pub enum RobustError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] GibError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("invalid attack spec `{field}`: {message}")]
    Spec {
        field: &'static str,
        message: String,
    },
    #[error("node {target}: only {available} eligible endpoints for a budget of {budget}")]
    InsufficientEligible {
        target: usize,
        budget: usize,
        available: usize,
    },
    #[error("need {needed} correctly classified test nodes, found {available}")]
    InsufficientCorrect { needed: usize, available: usize },
    #[error("writing report: {0}")]
    Io(#[from] std::io::Error),
    #[error("writing report: {0}")]
    Csv(#[from] csv::Error),
}

#[cfg(test)]
mod tests;
