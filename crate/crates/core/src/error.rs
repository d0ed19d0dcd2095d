use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("covariance is not positive definite: eigenvalue {eigenvalue} <= 0")]
    NotPositiveDefinite { eigenvalue: f64 },

    #[error("covariance is not symmetric: {0} != {1}")]
    NotSymmetric(f64, f64),

    #[error("malformed CIFAR-10 record in {path}: {len} trailing bytes at offset {offset}")]
    MalformedRecord { path: PathBuf, offset: usize, len: usize },

    #[error("invalid CIFAR-10 label {label} at record {index} in {path}")]
    InvalidImageLabel { path: PathBuf, index: usize, label: u8 },

    #[error("class {label} has {available} samples, {requested} requested")]
    InsufficientClass { label: i32, available: usize, requested: usize },

    #[error("class {0} has positive selection weight but no samples")]
    EmptyClass(i32),

    #[error("unknown label {0}")]
    UnknownLabel(i32),

    #[error("label {label} outside [0, {classes})")]
    LabelOutOfRange { label: i32, classes: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("dataset must contain both labels -1 and +1")]
    SingleClass,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
