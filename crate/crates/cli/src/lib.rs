//! Experiment runner for the end-to-end training schemes: flat config
//! parsing, one training run per invocation, a BLER sweep over Eb/N0, and
//! CSV output.

pub mod config;
pub mod csv_out;
pub mod experiment;

use std::io;
use std::path::Path;

use ragan_core::{Error, LoadError};

pub use config::{ChannelKind, ExperimentConfig, RawConfig};
pub use csv_out::{BlerCurve, BlerPoint};
pub use experiment::{run_and_emit, run_experiment, ExperimentResult};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("training aborted: {0}")]
    Abort(Error),

    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Abort(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Config(m) | CliError::Io(m) => m.clone(),
            CliError::Abort(e) => e.to_string(),
        }
    }

    pub fn io(path: &Path, err: io::Error) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => CliError::Config(m),
            Error::Load(l) => l.into(),
            other => CliError::Abort(other),
        }
    }
}

impl From<LoadError> for CliError {
    fn from(e: LoadError) -> Self {
        match e {
            LoadError::Io { .. } => CliError::Io(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}
