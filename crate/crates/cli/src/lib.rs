//! Configuration-driven experiments on top of `varflow`.
//!
//! The `varflow` binary exposes three subcommands, each backed by a function
//! in [`commands`]: `run` (transport and action table), `sweep-alpha`
//! (rotational action against the quadratic law) and `convergence`
//! (integrator order study). Outputs are CSV files plus, for `run`, a JSON
//! report.

pub mod commands;
pub mod config;
pub mod error;
pub mod format;
pub mod report;

pub use commands::{convergence, run, sweep_alpha, ConvergenceSummary, SweepRow, SweepSummary};
pub use config::{Experiment, ExperimentConfig};
pub use error::{CliError, ConfigError};
pub use report::{ExperimentReport, FlowResult, GaussianRecord};
