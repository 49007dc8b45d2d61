use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("degenerate signal: norm {norm:e} is below 1e-12")]
    DegenerateSignal { norm: f64 },

    #[error("non-finite value in {what} (epoch {epoch}, iteration {iteration})")]
    NonFinite {
        what: String,
        epoch: usize,
        iteration: usize,
    },

    #[error(transparent)]
    Load(#[from] LoadError),
}

impl Error {
    pub(crate) fn shape(
        context: impl Into<String>,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        Error::Shape {
            context: context.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}

/// Failures while reading a channel-coefficient file.
#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read channel file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed channel sample {text:?}")]
    Malformed {
        path: PathBuf,
        line: usize,
        text: String,
    },

    #[error("channel file {path} contains no samples")]
    Empty { path: PathBuf },

    #[error("channel file {path} has zero mean power")]
    ZeroPower { path: PathBuf },
}
