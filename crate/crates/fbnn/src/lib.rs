//! Experiment plumbing around `fbnn-core`: TOML configs, CSV ingestion,
//! method dispatch, report files and the comparison table.

pub mod compare;
pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod mixture;
pub mod report;

pub use config::{ExperimentConfig, Method};
pub use error::{Error, Result};
pub use experiment::{run_experiment, Metrics, MonotonicClock, RunOutput};
