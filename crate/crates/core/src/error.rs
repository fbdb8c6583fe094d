//! Error type shared by every module of the crate.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dimension {found} exceeds the supported maximum of {max}")]
    DimensionTooLarge { found: usize, max: usize },

    /// A value lies outside the range of a transform.
    #[error("value {value} is outside the range of the {transform} transform")]
    Domain { transform: &'static str, value: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("operation `{operation}` is not supported by the {transform} transform")]
    UnsupportedTransform {
        transform: &'static str,
        operation: &'static str,
    },

    #[error("loss is not finite at the initial point")]
    NonFiniteLoss,

    /// Normal equations are numerically singular at the given pivot.
    #[error("singular system: pivot {pivot} has magnitude {magnitude:e}")]
    Singular { pivot: usize, magnitude: f64 },

    #[error("csv parse error at line {line}: {message}")]
    CsvParse { line: u64, message: String },

    #[error("target column `{0}` not found")]
    MissingTargetColumn(String),

    #[error("non-numeric cell {value:?} at row {row}, column `{column}`")]
    NonNumericCell { row: u64, column: String, value: String },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
