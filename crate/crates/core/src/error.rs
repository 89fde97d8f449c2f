use std::path::PathBuf;

use thiserror::Error;

/// An invalid parameter value, reported at construction time.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{0}")]
pub struct ParamError(String);

impl ParamError {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

/// Problems reading or validating driving data.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{source_name}: trace contains no samples")]
    Empty { source_name: String },
    #[error("{source_name}: row {row}: {msg}")]
    Row { source_name: String, row: usize, msg: String },
    #[error("{0}")]
    Insufficient(String),
}

/// Problems reading or writing a value-field file.
#[derive(Debug, Error)]
pub enum FieldIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed value field: {0}")]
    Format(String),
    #[error(transparent)]
    Param(#[from] ParamError),
}
