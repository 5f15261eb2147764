use crate::{tol, ComplexMatrix, LinalgError, RealMatrix};
use num_complex::Complex64;

/// Packed LU factorization with partial pivoting of a square complex matrix.
pub struct LuFactors {
    lu: ComplexMatrix,
    pivots: Vec<usize>,
    input_one_norm: f64,
}

impl LuFactors {
    pub fn factor(a: &ComplexMatrix) -> Result<Self, LinalgError> {
        if !a.is_square() {
            return Err(LinalgError::NotSquare {
                rows: a.rows(),
                cols: a.cols(),
            });
        }
        let n = a.rows();
        let input_one_norm = a.one_norm();
        let mut lu = a.clone();
        let mut pivots: Vec<usize> = (0..n).collect();

        for col in 0..n {
            let mut pivot_row = col;
            let mut pivot_mag = lu[(col, col)].norm();
            for row in col + 1..n {
                let mag = lu[(row, col)].norm();
                if mag > pivot_mag {
                    pivot_mag = mag;
                    pivot_row = row;
                }
            }
            if pivot_mag == 0.0 {
                return Err(LinalgError::Singular {
                    condition: f64::INFINITY,
                });
            }
            if pivot_row != col {
                for j in 0..n {
                    let tmp = lu[(col, j)];
                    lu[(col, j)] = lu[(pivot_row, j)];
                    lu[(pivot_row, j)] = tmp;
                }
                pivots.swap(col, pivot_row);
            }
            let pivot = lu[(col, col)];
            for row in col + 1..n {
                let factor = lu[(row, col)] / pivot;
                lu[(row, col)] = factor;
                for j in col + 1..n {
                    let sub = factor * lu[(col, j)];
                    lu[(row, j)] -= sub;
                }
            }
        }
        Ok(Self {
            lu,
            pivots,
            input_one_norm,
        })
    }

    pub fn solve(&self, rhs: &[Complex64]) -> Result<Vec<Complex64>, LinalgError> {
        let n = self.lu.rows();
        if rhs.len() != n {
            return Err(LinalgError::DimensionMismatch(format!(
                "rhs length {} does not match matrix dimension {}",
                rhs.len(),
                n
            )));
        }
        let mut y = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..n {
            let mut v = rhs[self.pivots[i]];
            for j in 0..i {
                v -= self.lu[(i, j)] * y[j];
            }
            y[i] = v;
        }
        let mut x = vec![Complex64::new(0.0, 0.0); n];
        for i in (0..n).rev() {
            let mut v = y[i];
            for j in i + 1..n {
                v -= self.lu[(i, j)] * x[j];
            }
            x[i] = v / self.lu[(i, i)];
        }
        Ok(x)
    }

    /// 1-norm condition estimate `||A||_1 ||A^-1||_1`. At the dimensions used
    /// here the inverse is computed column by column; no Hager-style estimator
    /// is needed.
    pub fn condition_estimate(&self) -> f64 {
        let n = self.lu.rows();
        let mut inv_norm: f64 = 0.0;
        let mut e = vec![Complex64::new(0.0, 0.0); n];
        for col in 0..n {
            e[col] = Complex64::new(1.0, 0.0);
            if let Ok(x) = self.solve(&e) {
                inv_norm = inv_norm.max(x.iter().map(|v| v.norm()).sum());
            } else {
                inv_norm = f64::INFINITY;
            }
            e[col] = Complex64::new(0.0, 0.0);
        }
        self.input_one_norm * inv_norm
    }
}

/// Solves `A x = b` for real square `A`, declaring singularity when the
/// condition estimate exceeds [`tol::SINGULAR_CONDITION`].
pub fn solve(a: &RealMatrix, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let rhs: Vec<Complex64> = b.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let x = solve_complex(&a.to_complex(), &rhs)?;
    Ok(x.into_iter().map(|v| v.re).collect())
}

/// Complex variant of [`solve`].
pub fn solve_complex(a: &ComplexMatrix, b: &[Complex64]) -> Result<Vec<Complex64>, LinalgError> {
    let factors = LuFactors::factor(a)?;
    let cond = factors.condition_estimate();
    if !cond.is_finite() || cond > tol::SINGULAR_CONDITION {
        return Err(LinalgError::Singular { condition: cond });
    }
    factors.solve(b)
}

/// 1-norm condition estimate of a real square matrix; infinite when exactly singular.
pub fn condition_estimate(a: &RealMatrix) -> f64 {
    match LuFactors::factor(&a.to_complex()) {
        Ok(f) => f.condition_estimate(),
        Err(_) => f64::INFINITY,
    }
}
