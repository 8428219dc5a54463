use std::path::PathBuf;

use thiserror::Error;

/// Coarse classification used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse error at row {row}, column '{column}': cannot read '{value}' as a real number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("value outside the supported domain: {0}")]
    Domain(String),

    #[error("insufficient data for {what}: need at least {needed}, got {got}")]
    InsufficientData {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("predictions have zero pooled variance")]
    DegeneratePredictor,

    #[error("second-moment matrix is singular or ill-conditioned (condition estimate {condition:e})")]
    Conditioning { condition: f64 },

    #[error("interpolation nodes coincide in block {block}")]
    DegenerateNodes { block: usize },

    #[error("missing derivative bound: {0}")]
    MissingBound(String),

    #[error("config error on line {line}: {message}")]
    Config { line: usize, message: String },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArgument(_) | Error::MissingBound(_) | Error::Config { .. } => {
                ErrorKind::Usage
            }
            Error::Io { .. }
            | Error::Csv(_)
            | Error::Parse { .. }
            | Error::Schema(_)
            | Error::Dimension { .. }
            | Error::Domain(_) => ErrorKind::Data,
            Error::InsufficientData { .. }
            | Error::DegeneratePredictor
            | Error::Conditioning { .. }
            | Error::DegenerateNodes { .. } => ErrorKind::Numerical,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
