//! Graph datasets, their on-disk format, k-hop pools and node relabeling.

mod dataset;
mod hops;
mod perm;
pub mod synth;

use std::path::PathBuf;

use thiserror::Error;

pub use dataset::{
    GraphDataset, Split, SplitIds, EDGES_FILE, FEATURES_FILE, LABELS_FILE, SPLITS_FILE,
};
pub use hops::{build_hop_sets, HopSets};
pub use perm::{permute, Permutation};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("missing dataset file {0}")]
    MissingFile(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("features.tsv line {line}: expected {expected} columns, got {got}")]
    RaggedFeatures {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("node {node} has label {label}, outside [0, {num_classes})")]
    LabelOutOfRange {
        node: usize,
        label: usize,
        num_classes: usize,
    },
    #[error("node {node} appears in more than one split")]
    OverlappingMasks { node: usize },
    #[error("train split is empty")]
    EmptyTrainMask,
    #[error("self-loop on node {node}")]
    SelfLoop { node: usize },
    #[error("node {node} out of range for {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("{what}: expected {expected}, got {got}")]
    SizeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("not a permutation: {0}")]
    NotBijective(String),
    #[error("max hop must be at least 1")]
    ZeroMaxHop,
}

#[cfg(test)]
mod tests;
