//! Experiment harness for `clipwave-core`.
//!
//! Reads JSON experiment configurations, runs seeded end-to-end regressions,
//! fits log-log rates over sweeps and persists records, regret curves and
//! checkpoints. The `clipwave` binary wraps these functions.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod config;
pub mod digest;
mod error;
pub mod experiment;
pub mod queue;
pub mod rates;
pub mod records;
pub mod selftest;
pub mod sweep;

pub use config::{Exponent, ExperimentConfig, TargetConfig, TargetShape};
pub use error::{HarnessError, Result};
pub use experiment::{run_experiment, run_with, RegretCurves, RunOptions, RunOutcome, RunRecord};
pub use rates::{fit_rate, RateFit, Sweep};

/// Version tag stored in every record.
pub const VERSION: &str = concat!("clipwave-", env!("CARGO_PKG_VERSION"));
