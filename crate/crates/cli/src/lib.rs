//! Experiment runner for the distributed solver: TOML configs in, CSV traces
//! and a per-run summary out.

pub mod config;
pub mod experiment;

pub use config::ExperimentConfig;
pub use experiment::{run_all, validate, write_outputs, CliError, OUT_DIR_ENV};
