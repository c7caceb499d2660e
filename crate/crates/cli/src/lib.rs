//! Experiment harness: configuration, orchestration of simulation, flow and
//! statics runs, and CSV/JSON emission.

pub mod commands;
pub mod compare;
pub mod config;
pub mod error;
pub mod output;

pub use config::{ExperimentConfig, Kind};
pub use error::{CliError, Result};
