//! General (non-Hermitian) eigendecomposition: Householder reduction to upper
//! Hessenberg form followed by an implicitly shifted QR iteration in complex
//! arithmetic, producing a Schur form `A = Q T Q^dagger`. Eigenvectors are
//! recovered by back-substitution on `T`.

use crate::{tol, ComplexMatrix, LinalgError, RealMatrix};
use num_complex::Complex64;

/// Eigendecomposition result. `eigenvectors`, when present, stores one
/// normalized eigenvector per column, paired with `eigenvalues[k]`.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Vec<Complex64>,
    pub eigenvectors: Option<ComplexMatrix>,
}

/// Full eigendecomposition of a real square matrix. Eigenvalues of real input
/// are symmetrized into exact conjugate pairs when the computed values already
/// match to roundoff.
pub fn eig(a: &RealMatrix) -> Result<Spectrum, LinalgError> {
    let mut spectrum = eig_complex(&a.to_complex())?;
    pair_conjugates(&mut spectrum.eigenvalues, a.frobenius_norm());
    Ok(spectrum)
}

/// Eigenvalues of a real square matrix (no eigenvector accumulation).
pub fn eigenvalues(a: &RealMatrix) -> Result<Vec<Complex64>, LinalgError> {
    let mut vals = eigenvalues_complex(&a.to_complex())?;
    pair_conjugates(&mut vals, a.frobenius_norm());
    Ok(vals)
}

/// Full eigendecomposition of a complex square matrix.
pub fn eig_complex(a: &ComplexMatrix) -> Result<Spectrum, LinalgError> {
    check_square(a)?;
    let n = a.rows();
    if n == 0 {
        return Ok(Spectrum {
            eigenvalues: vec![],
            eigenvectors: Some(ComplexMatrix::zeros(0, 0)),
        });
    }
    let (mut t, mut q) = hessenberg(a, true);
    qr_to_schur(&mut t, q.as_mut())?;
    let q = q.expect("accumulated");
    let vectors = eigenvectors_from_schur(&t, &q);
    let eigenvalues: Vec<Complex64> = (0..n).map(|i| t[(i, i)]).collect();

    let fnorm = a.frobenius_norm();
    let mut worst = 0.0_f64;
    for k in 0..n {
        let v: Vec<Complex64> = (0..n).map(|i| vectors[(i, k)]).collect();
        let av = a.matvec(&v);
        let residual: f64 = av
            .iter()
            .zip(&v)
            .map(|(avi, vi)| (avi - eigenvalues[k] * vi).norm_sqr())
            .sum::<f64>()
            .sqrt();
        worst = worst.max(residual);
    }
    if worst > tol::EIG_RESIDUAL * fnorm.max(1.0) {
        return Err(LinalgError::NonConvergence { residual: worst });
    }

    Ok(Spectrum {
        eigenvalues,
        eigenvectors: Some(vectors),
    })
}

/// Eigenvalues of a complex square matrix (no eigenvector accumulation).
pub fn eigenvalues_complex(a: &ComplexMatrix) -> Result<Vec<Complex64>, LinalgError> {
    check_square(a)?;
    let n = a.rows();
    if n == 0 {
        return Ok(vec![]);
    }
    let (mut t, _) = hessenberg(a, false);
    qr_to_schur(&mut t, None)?;
    Ok((0..n).map(|i| t[(i, i)]).collect())
}

fn check_square(a: &ComplexMatrix) -> Result<(), LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    Ok(())
}

/// Householder reduction `A = Q H Q^dagger` with `H` upper Hessenberg.
fn hessenberg(a: &ComplexMatrix, accumulate: bool) -> (ComplexMatrix, Option<ComplexMatrix>) {
    let n = a.rows();
    let mut h = a.clone();
    let mut q = if accumulate {
        Some(ComplexMatrix::identity(n))
    } else {
        None
    };
    if n < 3 {
        return (h, q);
    }
    let mut v = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..n - 2 {
        let m = n - k - 1; // length of the column tail below the diagonal
        let mut norm_sq = 0.0;
        for i in 0..m {
            norm_sq += h[(k + 1 + i, k)].norm_sqr();
        }
        let norm = norm_sq.sqrt();
        if norm == 0.0 {
            continue;
        }
        let x0 = h[(k + 1, k)];
        let phase = if x0.norm() == 0.0 {
            Complex64::new(1.0, 0.0)
        } else {
            x0 / x0.norm()
        };
        let alpha = -phase * norm;
        v[0] = x0 - alpha;
        for i in 1..m {
            v[i] = h[(k + 1 + i, k)];
        }
        let vnorm_sq: f64 = v[..m].iter().map(|c| c.norm_sqr()).sum();
        if vnorm_sq == 0.0 {
            continue;
        }
        let beta = 2.0 / vnorm_sq;

        // rows k+1..n: H <- (I - beta v v^dagger) H
        for j in k..n {
            let mut w = Complex64::new(0.0, 0.0);
            for i in 0..m {
                w += v[i].conj() * h[(k + 1 + i, j)];
            }
            w *= beta;
            for i in 0..m {
                let delta = v[i] * w;
                h[(k + 1 + i, j)] -= delta;
            }
        }
        // columns k+1..n: H <- H (I - beta v v^dagger)
        for i in 0..n {
            let mut w = Complex64::new(0.0, 0.0);
            for l in 0..m {
                w += h[(i, k + 1 + l)] * v[l];
            }
            w *= beta;
            for l in 0..m {
                let delta = w * v[l].conj();
                h[(i, k + 1 + l)] -= delta;
            }
        }
        if let Some(q) = q.as_mut() {
            for i in 0..n {
                let mut w = Complex64::new(0.0, 0.0);
                for l in 0..m {
                    w += q[(i, k + 1 + l)] * v[l];
                }
                w *= beta;
                for l in 0..m {
                    let delta = w * v[l].conj();
                    q[(i, k + 1 + l)] -= delta;
                }
            }
        }
        h[(k + 1, k)] = alpha;
        for i in k + 2..n {
            h[(i, k)] = Complex64::new(0.0, 0.0);
        }
    }
    (h, q)
}

/// Complex Givens rotation `G = [[c, s], [-conj(s), c]]` with real `c >= 0`
/// such that `G (x, y)^T = (r, 0)^T`.
fn givens(x: Complex64, y: Complex64) -> (f64, Complex64) {
    let xn = x.norm();
    let yn = y.norm();
    if yn == 0.0 {
        return (1.0, Complex64::new(0.0, 0.0));
    }
    if xn == 0.0 {
        return (0.0, y.conj() / yn);
    }
    let rho = (xn * xn + yn * yn).sqrt();
    let c = xn / rho;
    let s = x * y.conj() / (rho * xn);
    (c, s)
}

/// In-place implicitly shifted QR on an upper Hessenberg matrix, reducing it
/// to upper triangular Schur form. `q`, when provided, accumulates the
/// similarity so that the original matrix equals `Q T Q^dagger`.
fn qr_to_schur(t: &mut ComplexMatrix, mut q: Option<&mut ComplexMatrix>) -> Result<(), LinalgError> {
    let n = t.rows();
    if n <= 1 {
        return Ok(());
    }
    let fnorm = t.frobenius_norm().max(f64::MIN_POSITIVE);
    let eps = f64::EPSILON;
    let negligible = |t: &ComplexMatrix, k: usize| -> bool {
        let scale = t[(k - 1, k - 1)].norm() + t[(k, k)].norm();
        let scale = if scale == 0.0 { fnorm } else { scale };
        t[(k, k - 1)].norm() <= eps * scale
    };

    let mut hi = n - 1;
    let mut iters_this_eig = 0usize;
    loop {
        // deflate converged eigenvalues at the bottom of the active block
        while hi > 0 && negligible(t, hi) {
            t[(hi, hi - 1)] = Complex64::new(0.0, 0.0);
            hi -= 1;
            iters_this_eig = 0;
        }
        if hi == 0 {
            return Ok(());
        }
        // start of the unreduced block ending at hi
        let mut lo = hi;
        while lo > 0 && !negligible(t, lo) {
            lo -= 1;
        }
        if lo > 0 {
            t[(lo, lo - 1)] = Complex64::new(0.0, 0.0);
        }

        iters_this_eig += 1;
        if iters_this_eig > tol::QR_MAX_ITERS_PER_EIG {
            return Err(LinalgError::NonConvergence {
                residual: t[(hi, hi - 1)].norm(),
            });
        }

        let mu = if iters_this_eig % 12 == 0 {
            // exceptional shift to break rare cycles
            let mut ts = t[(hi, hi - 1)].norm();
            if hi >= 2 {
                ts += t[(hi - 1, hi - 2)].norm();
            }
            t[(hi, hi)] + Complex64::new(0.75 * ts, 0.0)
        } else {
            wilkinson_shift(t, hi)
        };

        // bulge chase over the active block
        let mut x = t[(lo, lo)] - mu;
        let mut y = t[(lo + 1, lo)];
        for k in lo..hi {
            let (c, s) = givens(x, y);
            let row_start = if k > lo { k - 1 } else { lo };
            // rows k, k+1
            for j in row_start..n {
                let tk = t[(k, j)];
                let tk1 = t[(k + 1, j)];
                t[(k, j)] = c * tk + s * tk1;
                t[(k + 1, j)] = -s.conj() * tk + c * tk1;
            }
            // columns k, k+1
            let row_end = (k + 2).min(hi);
            for i in 0..=row_end {
                let tk = t[(i, k)];
                let tk1 = t[(i, k + 1)];
                t[(i, k)] = c * tk + s.conj() * tk1;
                t[(i, k + 1)] = -s * tk + c * tk1;
            }
            if let Some(q) = q.as_deref_mut() {
                for i in 0..n {
                    let qk = q[(i, k)];
                    let qk1 = q[(i, k + 1)];
                    q[(i, k)] = c * qk + s.conj() * qk1;
                    q[(i, k + 1)] = -s * qk + c * qk1;
                }
            }
            if k + 1 < hi {
                x = t[(k + 1, k)];
                y = t[(k + 2, k)];
            }
        }
    }
}

/// Eigenvalue of the trailing 2x2 block closest to the bottom-right entry.
fn wilkinson_shift(t: &ComplexMatrix, hi: usize) -> Complex64 {
    let a = t[(hi - 1, hi - 1)];
    let b = t[(hi - 1, hi)];
    let c = t[(hi, hi - 1)];
    let d = t[(hi, hi)];
    let half_tr = (a + d) * 0.5;
    let det = a * d - b * c;
    let disc = (half_tr * half_tr - det).sqrt();
    let l1 = half_tr + disc;
    let l2 = half_tr - disc;
    if (l1 - d).norm() <= (l2 - d).norm() {
        l1
    } else {
        l2
    }
}

/// Back-substitution for eigenvectors of the triangular factor, rotated back
/// with `Q`. Near-zero divisors (clustered or defective eigenvalues) are
/// perturbed by `eps * ||T||` which keeps residuals at roundoff level.
fn eigenvectors_from_schur(t: &ComplexMatrix, q: &ComplexMatrix) -> ComplexMatrix {
    let n = t.rows();
    let fnorm = t.frobenius_norm().max(f64::MIN_POSITIVE);
    let smallnum = f64::EPSILON * fnorm;
    let mut vectors = ComplexMatrix::zeros(n, n);
    let mut y = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..n {
        for item in y.iter_mut() {
            *item = Complex64::new(0.0, 0.0);
        }
        y[k] = Complex64::new(1.0, 0.0);
        let lambda = t[(k, k)];
        for i in (0..k).rev() {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in i + 1..=k {
                acc += t[(i, j)] * y[j];
            }
            let mut d = t[(i, i)] - lambda;
            if d.norm() < smallnum {
                d = Complex64::new(smallnum, 0.0);
            }
            y[i] = -acc / d;
            // rescale to avoid overflow on strongly graded triangles
            let mag = y[i].norm();
            if mag > 1e250 {
                for item in y.iter_mut().take(k + 1).skip(i) {
                    *item /= mag;
                }
            }
        }
        // v = Q y (entries above k+1 are zero)
        let mut norm_sq = 0.0;
        for i in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, yj) in y.iter().enumerate().take(k + 1) {
                acc += q[(i, j)] * yj;
            }
            vectors[(i, k)] = acc;
            norm_sq += acc.norm_sqr();
        }
        let norm = norm_sq.sqrt();
        if norm > 0.0 {
            for i in 0..n {
                vectors[(i, k)] /= norm;
            }
        }
    }
    vectors
}

/// Symmetrizes numerically conjugate eigenvalue pairs of a real matrix and
/// flushes imaginary parts at roundoff level. Adjustments are bounded by
/// `1e-10 * max(1, ||A||_F)` so residual guarantees are preserved.
fn pair_conjugates(vals: &mut [Complex64], fnorm: f64) {
    let scale = fnorm.max(1.0);
    let tol_pair = 1e-10 * scale;
    for v in vals.iter_mut() {
        if v.im.abs() <= tol_pair {
            v.im = 0.0;
        }
    }
    let n = vals.len();
    let mut paired = vec![false; n];
    for i in 0..n {
        if paired[i] || vals[i].im <= 0.0 {
            continue;
        }
        let target = vals[i].conj();
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n {
            if i == j || paired[j] || vals[j].im >= 0.0 {
                continue;
            }
            let dist = (vals[j] - target).norm();
            if best.map_or(true, |(_, d)| dist < d) {
                best = Some((j, dist));
            }
        }
        if let Some((j, dist)) = best {
            if dist <= tol_pair {
                let avg = (vals[i] + vals[j].conj()) * 0.5;
                vals[i] = avg;
                vals[j] = avg.conj();
                paired[i] = true;
                paired[j] = true;
            }
        }
    }
}
