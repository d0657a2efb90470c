use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPositive(f64),

    #[error("trace is not one (got {0})")]
    InvalidTrace(f64),

    #[error("vector is not normalized (norm {0})")]
    NotNormalized(f64),

    #[error("non-finite entry in matrix or vector")]
    NonFinite,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unsupported dimension: {0}")]
    UnsupportedDimension(String),

    #[error("construction failed: {0}")]
    ConstructionFailure(String),

    #[error("integrity check failed: {0}")]
    Integrity(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
