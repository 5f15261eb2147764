//! Hermitian eigendecomposition via cyclic Jacobi sweeps, plus the two
//! consumers that only need the Hermitian path: spectral norm (through the
//! Gram matrix) and projection onto the PSD cone.

use crate::{tol, ComplexMatrix, LinalgError, RealMatrix};
use num_complex::Complex64;

/// Eigendecomposition of a Hermitian matrix. Returns eigenvalues in ascending
/// order and the matching orthonormal eigenvectors as columns.
///
/// Each off-diagonal entry is first rotated onto the real axis by a diagonal
/// phase similarity, then annihilated by a standard real Jacobi rotation; the
/// pair of transforms keeps the iteration within Hermitian matrices.
pub fn hermitian_eig(a: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix), LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let n = a.rows();
    let mut m = a.clone();
    // fold the (numerically) Hermitian input into an exactly Hermitian one
    for i in 0..n {
        m[(i, i)] = Complex64::new(m[(i, i)].re, 0.0);
        for j in i + 1..n {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
    let mut v = ComplexMatrix::identity(n);
    let fnorm = m.frobenius_norm().max(f64::MIN_POSITIVE);
    let threshold = tol::JACOBI_OFF * fnorm;

    for _sweep in 0..60 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += m[(p, q)].norm_sqr();
            }
        }
        if (2.0 * off).sqrt() <= threshold {
            let mut pairs: Vec<(f64, usize)> =
                (0..n).map(|i| (m[(i, i)].re, i)).collect();
            pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let eigenvalues: Vec<f64> = pairs.iter().map(|(val, _)| *val).collect();
            let vectors = ComplexMatrix::from_fn(n, n, |i, k| v[(i, pairs[k].1)]);
            return Ok((eigenvalues, vectors));
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.norm() <= f64::EPSILON * threshold.max(f64::MIN_POSITIVE) {
                    continue;
                }
                // phase similarity: multiply column q by e^{i phi} so m[p][q] becomes real >= 0
                let phi = -apq.arg();
                let phase = Complex64::from_polar(1.0, phi);
                if phi != 0.0 {
                    for i in 0..n {
                        let val = m[(i, q)] * phase;
                        m[(i, q)] = val;
                    }
                    for j in 0..n {
                        let val = m[(q, j)] * phase.conj();
                        m[(q, j)] = val;
                    }
                    for i in 0..n {
                        let val = v[(i, q)] * phase;
                        v[(i, q)] = val;
                    }
                }
                let app = m[(p, p)].re;
                let aqq = m[(q, q)].re;
                let apq_real = m[(p, q)].re;
                if apq_real.abs() == 0.0 {
                    continue;
                }
                // classic real Jacobi rotation annihilating the (p,q) entry
                let tau = (aqq - app) / (2.0 * apq_real);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    1.0 / (tau - (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // rows p, q
                for j in 0..n {
                    let mp = m[(p, j)];
                    let mq = m[(q, j)];
                    m[(p, j)] = c * mp - s * mq;
                    m[(q, j)] = s * mp + c * mq;
                }
                // columns p, q
                for i in 0..n {
                    let mp = m[(i, p)];
                    let mq = m[(i, q)];
                    m[(i, p)] = c * mp - s * mq;
                    m[(i, q)] = s * mp + c * mq;
                }
                for i in 0..n {
                    let vp = v[(i, p)];
                    let vq = v[(i, q)];
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
                m[(p, q)] = Complex64::new(0.0, 0.0);
                m[(q, p)] = Complex64::new(0.0, 0.0);
                m[(p, p)] = Complex64::new(m[(p, p)].re, 0.0);
                m[(q, q)] = Complex64::new(m[(q, q)].re, 0.0);
            }
        }
    }
    let mut off = 0.0_f64;
    for p in 0..n {
        for q in p + 1..n {
            off = off.max(m[(p, q)].norm());
        }
    }
    Err(LinalgError::NonConvergence { residual: off })
}

/// Largest singular value of a real matrix, computed as the square root of
/// the top eigenvalue of the Gram matrix `A^T A`.
pub fn spectral_norm(a: &RealMatrix) -> f64 {
    spectral_norm_complex(&a.to_complex())
}

/// Largest singular value of a complex matrix.
pub fn spectral_norm_complex(a: &ComplexMatrix) -> f64 {
    if a.rows() == 0 || a.cols() == 0 {
        return 0.0;
    }
    let gram = a.adjoint().mul(a);
    let (eigenvalues, _) = hermitian_eig(&gram).expect("Gram matrix is Hermitian");
    eigenvalues.last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

/// Nearest positive semidefinite matrix in Frobenius norm: eigendecompose,
/// clip negative eigenvalues at [`tol::PSD_CLIP_FLOOR`], reassemble.
pub fn psd_project(h: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
    if !h.is_square() {
        return Err(LinalgError::NotSquare {
            rows: h.rows(),
            cols: h.cols(),
        });
    }
    let deviation = h.hermitian_deviation();
    if deviation > tol::HERMITIAN * h.frobenius_norm().max(1.0) {
        return Err(LinalgError::NotHermitian { deviation });
    }
    let (eigenvalues, vectors) = hermitian_eig(h)?;
    let n = h.rows();
    let mut out = ComplexMatrix::zeros(n, n);
    for (k, &lambda) in eigenvalues.iter().enumerate() {
        let clipped = lambda.max(tol::PSD_CLIP_FLOOR);
        if clipped == 0.0 {
            continue;
        }
        for i in 0..n {
            let vi = vectors[(i, k)] * clipped;
            for j in 0..n {
                let delta = vi * vectors[(j, k)].conj();
                out[(i, j)] += delta;
            }
        }
    }
    // exact Hermitian symmetry of the reassembled projection
    for i in 0..n {
        out[(i, i)] = Complex64::new(out[(i, i)].re, 0.0);
        for j in i + 1..n {
            let avg = (out[(i, j)] + out[(j, i)].conj()) * 0.5;
            out[(i, j)] = avg;
            out[(j, i)] = avg.conj();
        }
    }
    Ok(out)
}
