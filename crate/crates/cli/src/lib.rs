//! Experiment runner for `sadl-core`: configs, trials over drift
//! scenarios, result tables, SVG plots, and the acceptance checks behind
//! `sadl verify`.

pub mod checks;
pub mod config;
pub mod plot;
pub mod runner;
pub mod table;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{AlgoSpec, ConfigError, ExperimentConfig};
pub use runner::{run_experiment, ExperimentResult};
pub use table::{Row, Summary, Table};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] sadl_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Write(#[from] std::io::Error),
    #[error("{0}")]
    Format(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    Threads(#[from] rayon::ThreadPoolBuildError),
}

impl RunError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        RunError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 1 for configuration problems, 2 for everything that fails at run
    /// time.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            _ => 2,
        }
    }
}
