//! Experiment runner for the tabular RLHF laboratory in `udrra-core`.
//!
//! An experiment reads a [`config::Config`], resolves it against its own
//! defaults, runs, and writes `trajectory_<run>.csv`, `hessian_checks.jsonl`
//! and `summary.json` into the output directory.

// `!(a > b)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod report;

pub use config::{Config, Resolved};
pub use error::{HarnessError, Result};
pub use experiments::Experiment;
pub use report::{Check, Outcome, Report, RunSummary};
