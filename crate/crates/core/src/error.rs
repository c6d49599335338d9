//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of its documented domain.
    #[error("configuration error: {0}")]
    Config(String),

    /// Full-file validation collecting every violation, not just the first.
    #[error("configuration is invalid:\n{}", .0.join("\n"))]
    ConfigList(Vec<String>),

    /// An API precondition was violated (dimension mismatch, index out of
    /// range, instance too large for an exhaustive oracle, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// The requested solver backend is not built into this binary.
    #[error("unsupported backend: {0}")]
    UnsupportedBackend(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
