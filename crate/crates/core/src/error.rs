use thiserror::Error;

/// Errors raised by the recovery pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("SVD of a {rows}x{cols} matrix did not converge")]
    SvdNoConvergence { rows: usize, cols: usize },

    #[error("symmetric eigendecomposition of order {order} did not converge")]
    EigenNoConvergence { order: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("matrix is not symmetric (max |S - S^T| = {deviation:e})")]
    NotSymmetric { deviation: f64 },

    #[error(
        "noise covariance is singular (smallest eigenvalue {min_eigenvalue:e}); \
         set an explicit eig_floor to clamp it"
    )]
    SingularCovariance { min_eigenvalue: f64 },

    #[error("the normal-equation factorization failed: {0}")]
    Factorization(String),

    #[error("ADMM produced a non-finite iterate at iteration {iteration}")]
    NonFiniteIterate { iteration: usize },

    #[error("{0}")]
    Format(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn dims(expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::DimensionMismatch {
            expected: expected.into(),
            got: got.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
