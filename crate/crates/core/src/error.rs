use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("expected {expected} samples (one per sequence), got {got}")]
    SampleCount { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("row {row} of the eigenvector matrix has norm {norm:e}")]
    DegenerateRow { row: usize, norm: f64 },

    #[error("sequence {sequence} was exhausted at t = {t}")]
    StreamExhausted { sequence: usize, t: usize },

    #[error("fewer than two non-empty clusters")]
    TooFewClusters,

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error("malformed input at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
