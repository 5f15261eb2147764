//! Matrix exponential by the [13/13] Pade approximant with scaling and
//! squaring. The conservative squaring threshold (4.25 rather than the
//! backward-error-optimal 5.37) buys accuracy headroom without the 1-norm
//! estimation machinery of the full Al-Mohy--Higham algorithm, which is not
//! worth carrying for matrices of this size.

use crate::{lu::LuFactors, ComplexMatrix, LinalgError};
use num_complex::Complex64;

const THETA_13: f64 = 4.25;

const PADE_13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Matrix exponential of a square complex matrix.
pub fn expm(a: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let n = a.rows();
    if n == 0 {
        return Ok(ComplexMatrix::zeros(0, 0));
    }
    let norm = a.one_norm();
    let squarings = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as u32
    } else {
        0
    };
    let scaled = a.scale(Complex64::new(1.0 / 2f64.powi(squarings as i32), 0.0));

    let identity = ComplexMatrix::identity(n);
    let a2 = scaled.mul(&scaled);
    let a4 = a2.mul(&a2);
    let a6 = a4.mul(&a2);

    let cr = |c: f64| Complex64::new(c, 0.0);
    let u_inner = a6
        .scale(cr(PADE_13[13]))
        .add(&a4.scale(cr(PADE_13[11])))
        .add(&a2.scale(cr(PADE_13[9])));
    let u_poly = a6
        .mul(&u_inner)
        .add(&a6.scale(cr(PADE_13[7])))
        .add(&a4.scale(cr(PADE_13[5])))
        .add(&a2.scale(cr(PADE_13[3])))
        .add(&identity.scale(cr(PADE_13[1])));
    let u = scaled.mul(&u_poly);

    let v_inner = a6
        .scale(cr(PADE_13[12]))
        .add(&a4.scale(cr(PADE_13[10])))
        .add(&a2.scale(cr(PADE_13[8])));
    let v = a6
        .mul(&v_inner)
        .add(&a6.scale(cr(PADE_13[6])))
        .add(&a4.scale(cr(PADE_13[4])))
        .add(&a2.scale(cr(PADE_13[2])))
        .add(&identity.scale(cr(PADE_13[0])));

    // solve (V - U) X = (V + U) column by column
    let lhs = v.sub(&u);
    let rhs = v.add(&u);
    let factors = LuFactors::factor(&lhs)?;
    let mut result = ComplexMatrix::zeros(n, n);
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..n {
        for i in 0..n {
            col[i] = rhs[(i, j)];
        }
        let x = factors.solve(&col)?;
        for i in 0..n {
            result[(i, j)] = x[i];
        }
    }
    for _ in 0..squarings {
        result = result.mul(&result);
    }
    Ok(result)
}
