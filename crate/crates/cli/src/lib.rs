//! Command-line front end for the ISAC beamforming optimizer: JSON
//! experiment configs, single runs, parameter sweeps, gradient checks and
//! plot-ready reports.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;
pub mod units;

pub use commands::{cmd_check_grad, cmd_report, cmd_run, cmd_sweep, GradCheck, ModeChoice, Overrides};
pub use config::ExperimentConfig;
pub use error::{CliError, Result};
