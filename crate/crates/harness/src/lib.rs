//! Experiment harness for `memes-core`: TOML run configs, run directories,
//! archive correction and parameter sweeps.

pub mod config;
pub mod correct;
pub mod runner;
pub mod sweep;

pub use config::{AlgorithmConfig, ConfigError, RunConfig};
pub use runner::{execute, run_dir, RunSummary};
