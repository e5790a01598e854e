use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A malformed row or field in a delimited text file.
    #[error("{file}: line {line}, column {column}: {message}")]
    Parse {
        file: String,
        line: u64,
        column: String,
        message: String,
    },

    /// Well-formed input that violates a documented invariant.
    #[error("schema violation: {0}")]
    Schema(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// Input too degenerate to estimate the requested quantity.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// An archive whose files are not laid out as expected.
    #[error("archive structure: {0}")]
    Structure(String),

    #[error("out of range: {0}")]
    Range(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("configuration: {0}")]
    Config(String),

    /// A checked internal invariant failed. Always a bug.
    #[error("internal assertion failed: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn is_internal(&self) -> bool {
        matches!(self, Error::Internal(_))
    }
}
