use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file exists but does not follow its declared format.
    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    /// Input data violates a precondition (too few valid cells, constant
    /// surface, degenerate geometry, missing ids, ...).
    #[error("data error: {0}")]
    Data(String),

    /// A parameter value is outside its valid domain.
    #[error("invalid parameter: {0}")]
    Param(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format { path: path.into(), message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Error::Data(message.into())
    }

    pub fn param(message: impl Into<String>) -> Self {
        Error::Param(message.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
