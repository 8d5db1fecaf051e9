//! Graph information bottleneck toolkit.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod gibnn;
pub mod graphio;
pub mod numcore;
pub mod robustbench;
pub mod train;
pub mod verify;
