//! Experiment runner around `fedah-core`: TOML configs, IDX loading, CSV and
//! SVG outputs, and the `fedah` command line.

pub mod config;
pub mod dataset;
pub mod error;
pub mod exec;
pub mod output;
pub mod runner;

pub use config::{ExperimentConfig, Loaded};
pub use error::{CliError, Result};
pub use exec::Rayon;
pub use output::RunResult;
pub use runner::{describe, run, Plan};
