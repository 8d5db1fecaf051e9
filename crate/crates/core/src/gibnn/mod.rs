//! The GIB-Cat / GIB-Bern node classifiers and their GAT-style baseline.
//!
//! Each layer scores candidate neighbors drawn from k-hop pools, samples a
//! weighted neighborhood, aggregates transformed features and emits a
//! diagonal Gaussian per node. [`forward_on`] records everything on a
//! [`Tape`](crate::numcore::Tape) so the loss can be differentiated.

mod checkpoint;
mod config;
mod model;
mod noise;
mod pairs;
mod params;
mod sampling;

use std::path::PathBuf;

use thiserror::Error;

pub use checkpoint::{
    data_path, load_checkpoint, save_checkpoint, Checkpoint, Manifest, TensorEntry,
};
pub use config::{EvalMode, GibConfig, Objective, RegReduction, Sampler, Structure, Variant};
pub use model::{
    forward_on, layer_forward, logits, model_forward, predict, ForwardTrace, ForwardVars,
    LayerTrace, LayerVars, Mode, ModelInput, VARIANCE_FLOOR,
};
pub use noise::Noise;
pub use pairs::PairIndex;
pub use params::{
    init_params, BoundParams, LayerParams, MixtureParams, ModelParams, MIXTURE_STD_FLOOR,
};
pub use sampling::{
    attention_logits, attention_logits_on, neighbor_sample_bern, neighbor_sample_cat,
    sample_bern_on, sample_cat_on, NeighborSample, SampleMode,
};

use crate::graphio::GraphError;
use crate::numcore::NumError;

#[derive(Debug, Error)]
pub enum GibError {
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("invalid config field `{field}`: {message}")]
    Config {
        field: &'static str,
        message: String,
    },
    #[error("parameter layout: {0}")]
    Layout(String),
    #[error("non-finite {what} at index {index}: {value}")]
    NonFinite {
        what: &'static str,
        index: usize,
        value: f64,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[cfg(test)]
mod tests;
