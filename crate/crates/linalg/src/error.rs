use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix entries must be finite: {0}")]
    NonFiniteEntry(String),
    #[error("matrix is singular or near-singular (condition estimate {condition:.3e})")]
    Singular { condition: f64 },
    #[error("iteration failed to converge (residual {residual:.3e})")]
    NonConvergence { residual: f64 },
    #[error("matrix is not Hermitian within tolerance (deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },
    #[error("matrix is not positive definite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },
}
