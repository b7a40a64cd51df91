use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("Jacobi eigensolver did not converge for a {dim}x{dim} matrix after {sweeps} sweeps")]
    NonConvergence { dim: usize, sweeps: usize },

    #[error("matrix is not symmetric: |m[{row}][{col}] - m[{col}][{row}]| = {gap:e}")]
    NotSymmetric { row: usize, col: usize, gap: f64 },

    #[error("matrix has a negative eigenvalue {eigenvalue:e}; metric is not positive semidefinite")]
    NotPositiveSemidefinite { eigenvalue: f64 },

    #[error("matrix is singular or numerically singular: {0}")]
    Singular(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix must be square, got {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },

    #[error("step {step}: regularized direction is not a descent direction")]
    NotDescent { step: usize },

    #[error("data set is empty")]
    EmptyData,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("model does not support sampling; use an empirical metric instead")]
    NoSampler,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed input: {0}")]
    Parse(String),
}
