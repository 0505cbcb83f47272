use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix does not have full row rank (smallest singular value {sigma_min:e})")]
    RankDeficient { sigma_min: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("not a valid quantum covariance matrix (minimal symplectic eigenvalue {nu_min})")]
    StateInvalid { nu_min: f64 },

    #[error("pushforward B_{index} alpha B_{index}^T is singular")]
    DegeneratePushforward { index: usize },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("polytope membership undecided: {0}")]
    UnknownCapacity(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("map {index}: declared kind {declared} but matrix is {actual}")]
    KindMismatch {
        index: usize,
        declared: String,
        actual: String,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
