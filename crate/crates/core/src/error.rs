use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A dataset file is missing or unparsable.
    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    /// The files parse but describe an impossible dataset.
    #[error("corrupt dataset: {0}")]
    Corruption(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("degenerate reference: node {node} has zero mass")]
    DegenerateReference { node: usize },

    #[error("degenerate affinity: row {row} has zero degree")]
    DegenerateAffinity { row: usize },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
