//! Experiment runner: (pairs × methods × models) grids and ablation sweeps
//! with bounded concurrency and cache-derived resumability.

pub mod config;
pub mod error;
pub mod experiment;

pub use config::ExperimentConfig;
pub use error::{Result, RunError};
pub use experiment::{summarize, Experiment, RunSummary, CODE_VERSION};
