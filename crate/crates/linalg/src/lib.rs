//! Dense linear algebra kernel for small matrices (dimensions up to a few
//! hundred). Everything is double precision, row-major, and allocation-simple:
//! the matrices handled by the higher layers are at most 256x256, so clarity
//! and verifiable tolerances win over blocking or SIMD tricks.
//!
//! Provided operations:
//! - general complex/real eigendecomposition (Hessenberg reduction followed by
//!   implicitly shifted QR, eigenvectors by back-substitution on the Schur form)
//! - Hermitian eigendecomposition (cyclic Jacobi with phase folding)
//! - matrix exponential (Pade 13 with scaling and squaring)
//! - LU solve with partial pivoting and a condition estimate
//! - spectral norm and projection onto the PSD cone

mod error;
mod expm;
mod hermitian;
mod hessenberg_qr;
mod lu;
mod matrix;

pub use error::LinalgError;
pub use expm::expm;
pub use hermitian::{hermitian_eig, psd_project, spectral_norm, spectral_norm_complex};
pub use hessenberg_qr::{eig, eig_complex, eigenvalues, eigenvalues_complex, Spectrum};
pub use lu::{condition_estimate, solve, solve_complex, LuFactors};
pub use matrix::{ComplexMatrix, RealMatrix};

/// Central tolerance table. Every threshold used by the kernel (and re-used by
/// the layers above) lives here so they can be audited in one place.
pub mod tol {
    /// Residual bound for returned eigenpairs: `||A v - lambda v|| <= EIG_RESIDUAL * ||A||_F`.
    pub const EIG_RESIDUAL: f64 = 1e-8;
    /// Residual bound for linear solves: `||A x - b|| <= SOLVE_RESIDUAL * (||A|| ||x|| + ||b||)`.
    pub const SOLVE_RESIDUAL: f64 = 1e-9;
    /// Condition-number estimate above which `solve` declares the matrix singular.
    pub const SINGULAR_CONDITION: f64 = 1e12;
    /// Hermitian symmetry tolerance for `psd_project` inputs.
    pub const HERMITIAN: f64 = 1e-10;
    /// Eigenvalues below this (relative to the largest magnitude) are clipped by `psd_project`.
    pub const PSD_CLIP_FLOOR: f64 = 0.0;
    /// Off-diagonal convergence threshold for the Jacobi sweep, relative to the Frobenius norm.
    pub const JACOBI_OFF: f64 = 1e-14;
    /// Maximum QR iterations per eigenvalue before reporting non-convergence.
    pub const QR_MAX_ITERS_PER_EIG: usize = 40;
}
