//! Graph-attention supply-event prediction with inventory rollout,
//! constrained inference, baselines and a synthetic benchmark generator.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod autodiff;
pub mod baselines;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod event_model;
pub mod export;
pub mod gnn;
pub mod graph;
pub mod inference;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod rollout;
pub mod synth;
pub mod timeline;
pub mod training;

pub use error::{GspError, Result};
