use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse error classes, used for the CLI exit-code taxonomy and FFI status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad configuration or invalid input data.
    Validation,
    /// The sampler or a factorization broke down.
    Numerical,
    /// A file produced by an earlier step is not there.
    MissingArtifact,
    /// Reading or writing failed for another reason.
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row}: {message}")]
    MalformedRow { row: usize, message: String },

    #[error("row {row}: non-positive {column} response {value}")]
    NonPositiveResponse {
        row: usize,
        column: &'static str,
        value: f64,
    },

    #[error("row {row}: {factor} = {value} outside [{lower}, {upper}]")]
    OutOfBounds {
        row: usize,
        factor: String,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("row {row}: unknown machine tag {tag:?} (expected A or B)")]
    UnknownMachine { row: usize, tag: String },

    #[error("invalid CSV header: expected {expected:?}, found {found:?}")]
    BadHeader { expected: String, found: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("posterior precision matrix is singular (condition estimate {condition:.3e})")]
    SingularPrecision { condition: f64 },

    #[error("chain {chain} failed at iteration {iteration}: {source}")]
    ChainFailure {
        chain: usize,
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("divergent variance draw for {parameter}")]
    DivergentVariance { parameter: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("factor {factor}: level {level} is never observed")]
    UnobservedLevel { factor: String, level: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing artifact {path}: {hint}")]
    MissingArtifact { path: PathBuf, hint: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::NotSpd(_)
            | Error::SingularPrecision { .. }
            | Error::ChainFailure { .. }
            | Error::DivergentVariance { .. } => ErrorKind::Numerical,
            Error::MissingArtifact { .. } => ErrorKind::MissingArtifact,
            Error::Io { .. } => ErrorKind::Io,
            _ => ErrorKind::Validation,
        }
    }
}
