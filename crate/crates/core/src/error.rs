use thiserror::Error;

/// Errors produced by the geometry, subproblem, and solver layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (max asymmetry {max_asym:.3e})")]
    NotSymmetric { max_asym: f64 },
    #[error("matrix is not skew-symmetric (max defect {max_defect:.3e})")]
    NotSkewSymmetric { max_defect: f64 },
    #[error("matrix is not positive definite ({context})")]
    NotPositiveDefinite { context: &'static str },
    #[error("retraction produced a non-positive-definite block ({context})")]
    RetractionFailure { context: &'static str },
    #[error("QP solver failed to converge after {iterations} iterations ({context})")]
    QpSolverFailure { iterations: usize, context: String },
    #[error("line search exhausted {trials} trials at outer iteration {iteration}")]
    LineSearchFailure { iteration: usize, trials: usize },
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid constraint specification: {0}")]
    InvalidConstraint(String),
    #[error("i/o error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
