use thiserror::Error;

/// Errors raised by the selection pipeline and its building blocks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("input contains NaN or infinite values")]
    NonFiniteInput,

    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("column {column} is degenerate (zero variance or too few rows)")]
    DegenerateColumn { column: usize },

    #[error("Cholesky factorization failed after {attempts} jitter attempts")]
    CholeskyFailure { attempts: usize },

    #[error("design matrix is rank deficient: {0}")]
    SingularDesign(String),

    #[error("need at least {required} rows, got {actual}")]
    InsufficientRows { required: usize, actual: usize },

    #[error("need at least {required} columns, got {actual}")]
    InsufficientColumns { required: usize, actual: usize },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("threshold must be positive, got {0}")]
    NonPositiveThreshold(f64),

    #[error("target level q must lie in (0, 1), got {0}")]
    InvalidQ(f64),

    #[error("invalid mediator count p = {p}: {reason}")]
    InvalidP { p: usize, reason: &'static str },

    #[error("exposure is not binary and dichotomization is disabled")]
    NonBinaryExposure,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
