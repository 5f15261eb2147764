//! Concrete channel constructors: amplitude damping, reset-based input
//! encodings, Hamiltonian-evolution channels, SK-Hamiltonian sampling and
//! random CPTP sampling.

use crate::pauli::{PauliBasis, PauliError};
use crate::ptm::{ptm_from_kraus, project_to_cptp, BlockPtm, KrausSet, PtmError};
use crate::rng;
use num_complex::Complex64;
use ptmrc_linalg::{expm, ComplexMatrix, LinalgError, RealMatrix};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("parameter out of domain: {0}")]
    Domain(String),
    #[error(transparent)]
    Pauli(#[from] PauliError),
    #[error(transparent)]
    Ptm(#[from] PtmError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

// ---------------------------------------------------------------------------
// Hamiltonians
// ---------------------------------------------------------------------------

/// How a Hamiltonian was produced; stored so serialized files can be
/// regenerated bit-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum HamiltonianMetadata {
    SherringtonKirkpatrick {
        j_s: f64,
        disorder_k: f64,
        h: f64,
        seed: u64,
    },
    DenseRandom {
        scale: f64,
        seed: u64,
    },
    Explicit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hamiltonian {
    n_qubits: usize,
    matrix: ComplexMatrix,
    metadata: HamiltonianMetadata,
}

impl Hamiltonian {
    pub fn new(
        n_qubits: usize,
        matrix: ComplexMatrix,
        metadata: HamiltonianMetadata,
    ) -> Result<Self, ChannelError> {
        let dim = 1usize << n_qubits;
        if matrix.rows() != dim || matrix.cols() != dim {
            return Err(ChannelError::Domain(format!(
                "Hamiltonian for {n_qubits} qubits must be {dim}x{dim}"
            )));
        }
        let dev = matrix.hermitian_deviation();
        if dev > 1e-10 {
            return Err(ChannelError::Domain(format!(
                "Hamiltonian must be Hermitian (deviation {dev:.3e})"
            )));
        }
        Ok(Self {
            n_qubits,
            matrix,
            metadata,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn metadata(&self) -> &HamiltonianMetadata {
        &self.metadata
    }
}

/// SK-type Hamiltonian
/// `H = sum_{i>j} J_ij X_i X_j + (1/2) sum_i (h + D_i) Z_i` with
/// `J_ij ~ U[-J_s/2, J_s/2]` and `D_i ~ U[-K J_s/2, K J_s/2]`. Deterministic
/// for a given seed.
pub fn sample_sk_hamiltonian(
    n_qubits: usize,
    j_s: f64,
    disorder_k: f64,
    h: f64,
    seed: u64,
) -> Result<Hamiltonian, ChannelError> {
    if !(j_s > 0.0) {
        return Err(ChannelError::Domain(format!("J_s must be positive, got {j_s}")));
    }
    if disorder_k < 0.0 {
        return Err(ChannelError::Domain(format!(
            "disorder strength must be nonnegative, got {disorder_k}"
        )));
    }
    let basis = PauliBasis::new(n_qubits)?;
    let mut stream = rng::stream(seed, &[]);
    let mut draw = |half_width: f64| -> f64 {
        if half_width > 0.0 {
            stream.gen_range(-half_width..half_width)
        } else {
            0.0
        }
    };
    let dim = basis.dim();
    let mut matrix = ComplexMatrix::zeros(dim, dim);
    // couplings, fixed (i > j) order
    for i in 2..=n_qubits {
        for j in 1..i {
            let coupling = draw(j_s / 2.0);
            if coupling == 0.0 {
                continue;
            }
            let index = (1usize << (2 * (i - 1))) + (1usize << (2 * (j - 1)));
            matrix = matrix.add(&basis.string(index).scale(Complex64::new(coupling, 0.0)));
        }
    }
    // longitudinal fields
    for i in 1..=n_qubits {
        let field = 0.5 * (h + draw(disorder_k * j_s / 2.0));
        if field == 0.0 {
            continue;
        }
        let index = 3usize << (2 * (i - 1));
        matrix = matrix.add(&basis.string(index).scale(Complex64::new(field, 0.0)));
    }
    Hamiltonian::new(
        n_qubits,
        matrix,
        HamiltonianMetadata::SherringtonKirkpatrick {
            j_s,
            disorder_k,
            h,
            seed,
        },
    )
}

/// Dense random Hermitian Hamiltonian (GUE-style), deterministic per seed.
pub fn sample_dense_hamiltonian(
    n_qubits: usize,
    scale: f64,
    seed: u64,
) -> Result<Hamiltonian, ChannelError> {
    let dim = 1usize << n_qubits;
    let mut stream = rng::stream(seed, &[]);
    let g = ComplexMatrix::from_fn(dim, dim, |_, _| {
        Complex64::new(stream.gen_range(-1.0..1.0), stream.gen_range(-1.0..1.0))
    });
    let hermitian = g
        .add(&g.adjoint())
        .scale(Complex64::new(0.5 * scale, 0.0));
    Hamiltonian::new(
        n_qubits,
        hermitian,
        HamiltonianMetadata::DenseRandom { scale, seed },
    )
}

/// Unitary evolution channel `U = exp(-i H dt)` in PTM form; the result has
/// `b = 0` and orthogonal `W`.
pub fn hamiltonian_step_ptm(
    basis: &PauliBasis,
    ham: &Hamiltonian,
    dt: f64,
) -> Result<BlockPtm, ChannelError> {
    if !(dt > 0.0) {
        return Err(ChannelError::Domain(format!("dt must be positive, got {dt}")));
    }
    if basis.n_qubits() != ham.n_qubits() {
        return Err(ChannelError::Domain(
            "basis and Hamiltonian disagree on qubit count".into(),
        ));
    }
    let generator = ham.matrix().scale(Complex64::new(0.0, -dt));
    let unitary = expm(&generator)?;
    let kraus = KrausSet::from_unitary(ham.n_qubits(), unitary)?;
    Ok(ptm_from_kraus(basis, &kraus)?)
}

// ---------------------------------------------------------------------------
// Single-qubit building blocks
// ---------------------------------------------------------------------------

/// Amplitude damping PTM `Gamma(gamma)` on one qubit:
/// `W = diag(sqrt(1-gamma), sqrt(1-gamma), 1-gamma)`, `b = (0, 0, gamma)`.
pub fn amplitude_damping_ptm(gamma: f64) -> Result<BlockPtm, ChannelError> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(ChannelError::Domain(format!(
            "damping rate must be in [0, 1], got {gamma}"
        )));
    }
    let s = (1.0 - gamma).sqrt();
    let w = RealMatrix::new(3, 3, vec![s, 0.0, 0.0, 0.0, s, 0.0, 0.0, 0.0, 1.0 - gamma])
        .expect("static entries");
    Ok(BlockPtm::new(1, vec![0.0, 0.0, gamma], w)?)
}

/// Standard amplitude damping Kraus pair
/// `K_0 = diag(1, sqrt(1-gamma))`, `K_1 = sqrt(gamma) |0><1|`.
pub fn amplitude_damping_kraus(gamma: f64) -> Result<KrausSet, ChannelError> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(ChannelError::Domain(format!(
            "damping rate must be in [0, 1], got {gamma}"
        )));
    }
    let c = |re: f64| Complex64::new(re, 0.0);
    let k0 = ComplexMatrix::new(2, 2, vec![c(1.0), c(0.0), c(0.0), c((1.0 - gamma).sqrt())])
        .expect("static entries");
    let k1 = ComplexMatrix::new(2, 2, vec![c(0.0), c(gamma.sqrt()), c(0.0), c(0.0)])
        .expect("static entries");
    Ok(KrausSet::new(1, vec![k0, k1])?)
}

/// 4x4 single-qubit PTM of `R_y(theta)`: rotation of the Bloch (x, z) plane.
fn ry_ptm_4x4(theta: f64) -> RealMatrix {
    let (sin, cos) = theta.sin_cos();
    RealMatrix::new(
        4,
        4,
        vec![
            1.0, 0.0, 0.0, 0.0, //
            0.0, cos, 0.0, sin, //
            0.0, 0.0, 1.0, 0.0, //
            0.0, -sin, 0.0, cos,
        ],
    )
    .expect("static entries")
}

/// 4x4 single-qubit PTM of `Gamma(1)` (complete reset to |0>).
fn reset_ptm_4x4() -> RealMatrix {
    RealMatrix::new(
        4,
        4,
        vec![
            1.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, 0.0, 0.0, //
            1.0, 0.0, 0.0, 0.0,
        ],
    )
    .expect("static entries")
}

/// Kronecker assembly of per-qubit 4x4 PTM factors into the full transfer
/// matrix, qubit N as the most significant digit.
fn assemble_ptm(n_qubits: usize, factor: impl Fn(usize) -> RealMatrix) -> RealMatrix {
    let mut acc = RealMatrix::identity(1);
    for q in (1..=n_qubits).rev() {
        acc = acc.kron(&factor(q));
    }
    acc
}

fn check_input(u: f64) -> Result<(), ChannelError> {
    if !(-1.0..=1.0).contains(&u) {
        return Err(ChannelError::Domain(format!(
            "input must lie in [-1, 1], got {u}"
        )));
    }
    Ok(())
}

fn check_targets(n_qubits: usize, targets: &[usize]) -> Result<(), ChannelError> {
    if targets.is_empty() {
        return Err(ChannelError::Domain("target qubit set is empty".into()));
    }
    for &q in targets {
        if q == 0 || q > n_qubits {
            return Err(ChannelError::Domain(format!(
                "qubit {q} out of range 1..={n_qubits}"
            )));
        }
    }
    if targets.len() != targets.iter().collect::<std::collections::BTreeSet<_>>().len() {
        return Err(ChannelError::Domain("duplicate target qubit".into()));
    }
    Ok(())
}

/// Unitary encoding PTM `R_y(arccos u)` on the target qubit, identity
/// elsewhere. No clamping: out-of-domain inputs are the caller's error.
pub fn ry_arccos_rotation(
    n_qubits: usize,
    target: usize,
    u: f64,
) -> Result<BlockPtm, ChannelError> {
    check_input(u)?;
    check_targets(n_qubits, &[target])?;
    let theta = u.acos();
    let full = assemble_ptm(n_qubits, |q| {
        if q == target {
            ry_ptm_4x4(theta)
        } else {
            RealMatrix::identity(4)
        }
    });
    let (ptm, _) = BlockPtm::from_full_matrix(n_qubits, &full)?;
    Ok(ptm)
}

/// Local reset unitary input encoding: on every input qubit, complete
/// amplitude damping followed by `R_y(arccos u)`; identity elsewhere.
pub fn local_reset_encoding(
    n_qubits: usize,
    input_qubits: &[usize],
    u: f64,
) -> Result<BlockPtm, ChannelError> {
    check_input(u)?;
    check_targets(n_qubits, input_qubits)?;
    let theta = u.acos();
    let per_qubit = ry_ptm_4x4(theta).mul(&reset_ptm_4x4());
    let full = assemble_ptm(n_qubits, |q| {
        if input_qubits.contains(&q) {
            per_qubit.clone()
        } else {
            RealMatrix::identity(4)
        }
    });
    let (ptm, _) = BlockPtm::from_full_matrix(n_qubits, &full)?;
    Ok(ptm)
}

/// Reset-only PTM (`Gamma(1)` on the given qubits); the input-independent
/// part of the local reset encoding.
pub fn local_reset_ptm(n_qubits: usize, input_qubits: &[usize]) -> Result<BlockPtm, ChannelError> {
    check_targets(n_qubits, input_qubits)?;
    let full = assemble_ptm(n_qubits, |q| {
        if input_qubits.contains(&q) {
            reset_ptm_4x4()
        } else {
            RealMatrix::identity(4)
        }
    });
    let (ptm, _) = BlockPtm::from_full_matrix(n_qubits, &full)?;
    Ok(ptm)
}

// ---------------------------------------------------------------------------
// Encoding families
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EncodingKind {
    /// `b(u) = 0` and orthogonal rotation block for every input.
    Unitary,
    /// Input-dependent influx, `b(u) != 0`.
    General,
}

/// A map `u -> PTM` implementing an input-encoding protocol on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EncodingFamily {
    /// Identity channel for every input.
    Identity { n_qubits: usize },
    /// `R_y(arccos u)` on each target qubit.
    RyArccos { n_qubits: usize, targets: Vec<usize> },
    /// Reset followed by `R_y(arccos u)` on each input qubit.
    ResetRyArccos {
        n_qubits: usize,
        input_qubits: Vec<usize>,
    },
}

impl EncodingFamily {
    pub fn n_qubits(&self) -> usize {
        match self {
            Self::Identity { n_qubits } => *n_qubits,
            Self::RyArccos { n_qubits, .. } => *n_qubits,
            Self::ResetRyArccos { n_qubits, .. } => *n_qubits,
        }
    }

    pub fn kind(&self) -> EncodingKind {
        match self {
            Self::Identity { .. } | Self::RyArccos { .. } => EncodingKind::Unitary,
            Self::ResetRyArccos { .. } => EncodingKind::General,
        }
    }

    /// Input dimension of the encoded signal (scalar throughout).
    pub fn input_dim(&self) -> usize {
        1
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        match self {
            Self::Identity { .. } => Ok(()),
            Self::RyArccos { n_qubits, targets } => check_targets(*n_qubits, targets),
            Self::ResetRyArccos {
                n_qubits,
                input_qubits,
            } => check_targets(*n_qubits, input_qubits),
        }
    }

    /// Dense PTM of the encoding at input `u`.
    pub fn ptm(&self, u: f64) -> Result<BlockPtm, ChannelError> {
        check_input(u)?;
        match self {
            Self::Identity { n_qubits } => Ok(BlockPtm::identity(*n_qubits)),
            Self::RyArccos { n_qubits, targets } => {
                check_targets(*n_qubits, targets)?;
                let theta = u.acos();
                let full = assemble_ptm(*n_qubits, |q| {
                    if targets.contains(&q) {
                        ry_ptm_4x4(theta)
                    } else {
                        RealMatrix::identity(4)
                    }
                });
                let (ptm, _) = BlockPtm::from_full_matrix(*n_qubits, &full)?;
                Ok(ptm)
            }
            Self::ResetRyArccos {
                n_qubits,
                input_qubits,
            } => local_reset_encoding(*n_qubits, input_qubits, u),
        }
    }

    /// Applies the encoding in place to a full PTM-space vector
    /// `(1, r)` of length `4^N`; equivalent to multiplying by `ptm(u)` but
    /// allocation-free. The leading component must be 1 and stays 1.
    pub fn apply_in_place(&self, u: f64, full: &mut [f64]) -> Result<(), ChannelError> {
        check_input(u)?;
        let n = self.n_qubits();
        debug_assert_eq!(full.len(), 4usize.pow(n as u32));
        match self {
            Self::Identity { .. } => Ok(()),
            Self::RyArccos { targets, .. } => {
                let theta = u.acos();
                for &q in targets {
                    rotate_qubit_in_place(full, n, q, theta);
                }
                Ok(())
            }
            Self::ResetRyArccos { input_qubits, .. } => {
                let theta = u.acos();
                for &q in input_qubits {
                    reset_qubit_in_place(full, n, q);
                    rotate_qubit_in_place(full, n, q, theta);
                }
                Ok(())
            }
        }
    }
}

/// In-place `R_y(theta)` on qubit `q` of a full PTM-space vector.
fn rotate_qubit_in_place(full: &mut [f64], n_qubits: usize, q: usize, theta: f64) {
    let (sin, cos) = theta.sin_cos();
    let shift = 2 * (q - 1);
    let stride = 1usize << shift;
    let size = 4usize.pow(n_qubits as u32);
    for i in 0..size {
        if (i >> shift) & 3 != 0 {
            continue;
        }
        let ix = i + stride;
        let iz = i + 3 * stride;
        let x = full[ix];
        let z = full[iz];
        full[ix] = cos * x + sin * z;
        full[iz] = -sin * x + cos * z;
    }
}

/// In-place complete reset (`Gamma(1)`) on qubit `q`.
fn reset_qubit_in_place(full: &mut [f64], n_qubits: usize, q: usize) {
    let shift = 2 * (q - 1);
    let stride = 1usize << shift;
    let size = 4usize.pow(n_qubits as u32);
    for i in 0..size {
        if (i >> shift) & 3 != 0 {
            continue;
        }
        full[i + stride] = 0.0;
        full[i + 2 * stride] = 0.0;
        full[i + 3 * stride] = full[i];
    }
}

// ---------------------------------------------------------------------------
// Random CPTP channels
// ---------------------------------------------------------------------------

/// Uniform random matrix with entries in `[-1, 1]` projected onto the CPTP
/// set; deterministic per seed.
pub fn sample_random_cptp(basis: &PauliBasis, seed: u64) -> Result<BlockPtm, ChannelError> {
    let size = basis.size();
    let mut stream = rng::stream(seed, &[]);
    let m = RealMatrix::from_fn(size, size, |_, _| stream.gen_range(-1.0..1.0));
    Ok(project_to_cptp(basis, &m, 200, 1e-8)?)
}

// ---------------------------------------------------------------------------
// Hamiltonian JSON schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HamiltonianJson {
    pub n_qubits: usize,
    /// Row-major, interleaved `[re, im, ...]`.
    pub entries_interleaved: Vec<f64>,
    pub metadata: HamiltonianMetadata,
}

impl From<&Hamiltonian> for HamiltonianJson {
    fn from(h: &Hamiltonian) -> Self {
        Self {
            n_qubits: h.n_qubits,
            entries_interleaved: h.matrix.data().iter().flat_map(|z| [z.re, z.im]).collect(),
            metadata: h.metadata.clone(),
        }
    }
}

impl TryFrom<HamiltonianJson> for Hamiltonian {
    type Error = ChannelError;
    fn try_from(json: HamiltonianJson) -> Result<Self, ChannelError> {
        let dim = 1usize << json.n_qubits;
        let entries: Vec<Complex64> = json
            .entries_interleaved
            .chunks(2)
            .map(|pair| Complex64::new(pair[0], pair[1]))
            .collect();
        let matrix = ComplexMatrix::new(dim, dim, entries)
            .map_err(|e| ChannelError::Domain(e.to_string()))?;
        Hamiltonian::new(json.n_qubits, matrix, json.metadata)
    }
}
