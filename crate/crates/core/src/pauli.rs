//! Pauli strings and the coherence-vector representation of quantum states.
//!
//! Index convention: a Pauli-string index `i` in `[0, 4^N)` is read in base 4,
//! least significant digit first; digit `l` selects the single-qubit operator
//! (0 = I, 1 = X, 2 = Y, 3 = Z) acting on qubit `l + 1`. Qubit 1 is the least
//! significant factor of the `2^N`-dimensional computational basis, so
//! `P_i = sigma_{k_N} (x) ... (x) sigma_{k_1}` as a Kronecker product.

use num_complex::Complex64;
use ptmrc_linalg::{hermitian_eig, ComplexMatrix};
use thiserror::Error;

/// Dense simulation caps out here; 4^N scaling is intentional.
pub const MAX_QUBITS: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PauliError {
    #[error("qubit count must be in 1..={MAX_QUBITS}, got {0}")]
    UnsupportedQubitCount(usize),
    #[error("Pauli index {index} out of range for {n_qubits} qubits (must be < {limit})")]
    IndexOutOfRange {
        index: usize,
        n_qubits: usize,
        limit: usize,
    },
    #[error("density matrix must be Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("density matrix must have unit trace (got {0})")]
    NotUnitTrace(Complex64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

fn sigma(k: usize) -> ComplexMatrix {
    let c = |re: f64, im: f64| Complex64::new(re, im);
    let entries = match k {
        0 => vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)],
        1 => vec![c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)],
        2 => vec![c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)],
        3 => vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)],
        _ => unreachable!("single-qubit Pauli index is a base-4 digit"),
    };
    ComplexMatrix::new(2, 2, entries).expect("static entries")
}

/// Pauli string `P_index` for an `n_qubits` register.
pub fn pauli_string(index: usize, n_qubits: usize) -> Result<ComplexMatrix, PauliError> {
    if n_qubits == 0 || n_qubits > MAX_QUBITS {
        return Err(PauliError::UnsupportedQubitCount(n_qubits));
    }
    let limit = 4usize.pow(n_qubits as u32);
    if index >= limit {
        return Err(PauliError::IndexOutOfRange {
            index,
            n_qubits,
            limit,
        });
    }
    let mut acc = ComplexMatrix::identity(1);
    for l in (0..n_qubits).rev() {
        let digit = (index >> (2 * l)) & 3;
        acc = acc.kron(&sigma(digit));
    }
    Ok(acc)
}

/// The ordered set of all `4^N` Pauli strings for a register, built once and
/// shared read-only.
#[derive(Debug, Clone)]
pub struct PauliBasis {
    n_qubits: usize,
    strings: Vec<ComplexMatrix>,
}

impl PauliBasis {
    pub fn new(n_qubits: usize) -> Result<Self, PauliError> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(PauliError::UnsupportedQubitCount(n_qubits));
        }
        let size = 4usize.pow(n_qubits as u32);
        let strings = (0..size)
            .map(|i| pauli_string(i, n_qubits))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { n_qubits, strings })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    /// Hilbert-space dimension `2^N`.
    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    /// Number of Pauli strings, `4^N`.
    pub fn size(&self) -> usize {
        self.strings.len()
    }

    /// Coherence-vector length, `4^N - 1`.
    pub fn coherence_dim(&self) -> usize {
        self.size() - 1
    }

    pub fn string(&self, index: usize) -> &ComplexMatrix {
        &self.strings[index]
    }

    pub fn strings(&self) -> &[ComplexMatrix] {
        &self.strings
    }

    /// Norm ceiling `c_N = sqrt(2^N - 1)`; attained exactly by pure states.
    pub fn pure_state_norm(&self) -> f64 {
        ((self.dim() - 1) as f64).sqrt()
    }
}

/// Real coherence vector `r` with `r_i = tr(P_{i+1} rho)`; the leading unit
/// component of `|rho>>` is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceState {
    n_qubits: usize,
    r: Vec<f64>,
}

impl CoherenceState {
    pub fn new(n_qubits: usize, r: Vec<f64>) -> Result<Self, PauliError> {
        let expect = 4usize.pow(n_qubits as u32) - 1;
        if r.len() != expect {
            return Err(PauliError::DimensionMismatch(format!(
                "coherence vector for {} qubits needs {} components, got {}",
                n_qubits,
                expect,
                r.len()
            )));
        }
        Ok(Self { n_qubits, r })
    }

    /// The completely mixed state, `r = 0`.
    pub fn completely_mixed(n_qubits: usize) -> Self {
        Self {
            n_qubits,
            r: vec![0.0; 4usize.pow(n_qubits as u32) - 1],
        }
    }

    /// The computational all-zeros product state `|0...0><0...0|`: every
    /// Pauli string made of I and Z only has expectation 1.
    pub fn ground_state(n_qubits: usize) -> Self {
        let size = 4usize.pow(n_qubits as u32);
        let mut r = vec![0.0; size - 1];
        for (idx, item) in r.iter_mut().enumerate() {
            let index = idx + 1;
            let all_iz = (0..n_qubits).all(|l| {
                let digit = (index >> (2 * l)) & 3;
                digit == 0 || digit == 3
            });
            if all_iz {
                *item = 1.0;
            }
        }
        Self { n_qubits, r }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn components(&self) -> &[f64] {
        &self.r
    }

    pub fn norm(&self) -> f64 {
        self.r.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Extraction from a density matrix, `r_i = tr(P_{i+1} rho)`.
    pub fn from_density(basis: &PauliBasis, rho: &ComplexMatrix) -> Result<Self, PauliError> {
        if rho.rows() != basis.dim() || rho.cols() != basis.dim() {
            return Err(PauliError::DimensionMismatch(format!(
                "density matrix must be {0}x{0}",
                basis.dim()
            )));
        }
        let dev = rho.hermitian_deviation();
        if dev > 1e-10 {
            return Err(PauliError::NotHermitian(dev));
        }
        let trace = rho.trace();
        if (trace - Complex64::new(1.0, 0.0)).norm() > 1e-10 {
            return Err(PauliError::NotUnitTrace(trace));
        }
        let r = (1..basis.size())
            .map(|i| basis.string(i).mul(rho).trace().re)
            .collect();
        Ok(Self {
            n_qubits: basis.n_qubits(),
            r,
        })
    }

    /// Reconstruction `rho = (1/2^N) sum_i P_i <P_i>` (the i = 0 term carries
    /// the implicit unit trace).
    pub fn to_density(&self, basis: &PauliBasis) -> ComplexMatrix {
        assert_eq!(basis.n_qubits(), self.n_qubits, "basis/state qubit count");
        let dim = basis.dim();
        let mut rho = ComplexMatrix::zeros(dim, dim);
        let scale = 1.0 / dim as f64;
        for (idx, p) in basis.strings().iter().enumerate() {
            let coeff = if idx == 0 { 1.0 } else { self.r[idx - 1] };
            if coeff == 0.0 {
                continue;
            }
            rho = rho.add(&p.scale(Complex64::new(coeff * scale, 0.0)));
        }
        rho
    }

    /// Smallest eigenvalue of the reconstructed density matrix; a physical
    /// state has this above `-1e-9`.
    pub fn physicality_margin(&self, basis: &PauliBasis) -> f64 {
        let rho = self.to_density(basis);
        let (eigenvalues, _) = hermitian_eig(&rho).expect("reconstruction is Hermitian");
        eigenvalues.first().copied().unwrap_or(0.0)
    }
}
