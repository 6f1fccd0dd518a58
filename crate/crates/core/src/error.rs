use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A matrix required to be positive definite failed the Cholesky pivot
    /// test. The message names the matrix (e.g. "Cov(Z,X)") when known.
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    /// Random structure generation exhausted its retry budget.
    #[error("generation failed: {0}")]
    GenerationFailed(String),

    /// The regression design is collinear after demeaning.
    #[error("rank-deficient design: {0}")]
    RankDeficient(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("unknown pollutant key: {0}")]
    UnknownPollutant(String),

    /// Malformed input file (JSON or CSV).
    #[error("schema error: {0}")]
    Schema(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
