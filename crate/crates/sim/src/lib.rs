//! Experiment driver for the node scheduling simulator: file formats,
//! TOML configuration and the matrix, fairness and cluster runners.

pub mod config;
pub mod error;
pub mod formats;
pub mod runner;

pub use config::{ExperimentConfig, Overrides};
pub use error::{Result, SimError};
pub use nodesched_core as core;
pub use runner::{cluster_experiment, fairness_experiment, run_matrix, Report};
