//! Experiment harness: configuration files, seeded initial states, ensemble
//! sweeps and CSV output for the tilted Bose-Hubbard toolkit.

pub mod config;
pub mod experiments;
pub mod oracle_check;
pub mod output;
pub mod sampling;

use std::path::PathBuf;

pub use config::{ExperimentConfig, ExperimentKind};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] tbh_core::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("config syntax: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("sampling: {0}")]
    Sampling(String),
    #[error("{path} was written for config {found}, not {expected}; refusing to overwrite")]
    HashMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
