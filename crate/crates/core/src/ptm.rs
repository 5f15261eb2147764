//! Pauli transfer matrices in block form, Kraus and Choi representations,
//! conversions between them, CPTP validation, and projection of arbitrary
//! matrices onto the CPTP set.
//!
//! Normalization: `O_{i,j} = (1/2^N) tr(P_i E(P_j))`, so the identity channel
//! maps to the identity matrix, trace preservation pins the first row to
//! `(1, 0, ..., 0)`, and state updates read `r' = W r + b` exactly. The Choi
//! matrix is stored as `C = (1/4^N) sum_{i,j} O_{i,j} P_j^T (x) P_i`, which
//! for a CPTP channel is the PSD, trace-one Choi state.

use crate::pauli::{CoherenceState, PauliBasis, PauliError};
use num_complex::Complex64;
use once_cell::sync::OnceCell;
use ptmrc_linalg::{eigenvalues, hermitian_eig, psd_project, ComplexMatrix, RealMatrix};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Version tag embedded in every serialized object so files are self-describing.
pub const PTM_NORMALIZATION_TAG: &str = "ptm-identity-normalized-v1";

/// Trace-preservation tolerance for Kraus sets and PTM first rows.
pub const TP_TOL: f64 = 1e-10;
/// A channel counts as CPTP when the Choi minimum eigenvalue is above this.
pub const CPTP_EIG_TOL: f64 = -1e-7;
/// Influx norm below this classifies a channel as unital.
pub const UNITAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PtmError {
    #[error(transparent)]
    Pauli(#[from] PauliError),
    #[error(transparent)]
    Linalg(#[from] ptmrc_linalg::LinalgError),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("Kraus set is not trace preserving (deviation {0:.3e})")]
    NotTracePreserving(f64),
    #[error("matrix is not trace preserving as a PTM (first-row deviation {0:.3e})")]
    FirstRowViolation(f64),
    #[error("CPTP projection did not converge in {iterations} iterations (last step {residual:.3e})")]
    ProjectionStalled { iterations: usize, residual: f64 },
    #[error("projected channel failed CPTP validation (Choi min eigenvalue {0:.3e})")]
    ProjectionInvalid(f64),
    #[error("serialized object carries unknown normalization tag {0:?}")]
    UnknownNormalization(String),
}

/// A trace-preserving PTM in block form `(1, 0^T; b, W)`. The first row is
/// implicit, so trace preservation holds exactly by construction.
#[derive(Debug, Clone)]
pub struct BlockPtm {
    n_qubits: usize,
    b: Vec<f64>,
    w: RealMatrix,
    w_spectrum: OnceCell<Vec<Complex64>>,
}

impl PartialEq for BlockPtm {
    fn eq(&self, other: &Self) -> bool {
        self.n_qubits == other.n_qubits && self.b == other.b && self.w == other.w
    }
}

impl BlockPtm {
    pub fn new(n_qubits: usize, b: Vec<f64>, w: RealMatrix) -> Result<Self, PtmError> {
        let dim = 4usize.pow(n_qubits as u32) - 1;
        if b.len() != dim || w.rows() != dim || w.cols() != dim {
            return Err(PtmError::DimensionMismatch(format!(
                "block PTM for {n_qubits} qubits needs |b| = {dim} and W {dim}x{dim}, got |b| = {}, W {}x{}",
                b.len(),
                w.rows(),
                w.cols()
            )));
        }
        Ok(Self {
            n_qubits,
            b,
            w,
            w_spectrum: OnceCell::new(),
        })
    }

    pub fn identity(n_qubits: usize) -> Self {
        let dim = 4usize.pow(n_qubits as u32) - 1;
        Self {
            n_qubits,
            b: vec![0.0; dim],
            w: RealMatrix::identity(dim),
            w_spectrum: OnceCell::new(),
        }
    }

    /// Complete depolarization: every state maps to the completely mixed state.
    pub fn depolarizing(n_qubits: usize) -> Self {
        let dim = 4usize.pow(n_qubits as u32) - 1;
        Self {
            n_qubits,
            b: vec![0.0; dim],
            w: RealMatrix::zeros(dim, dim),
            w_spectrum: OnceCell::new(),
        }
    }

    /// Splits a full `4^N x 4^N` transfer matrix into blocks, reporting the
    /// first-row deviation from `(1, 0, ..., 0)`.
    pub fn from_full_matrix(n_qubits: usize, m: &RealMatrix) -> Result<(Self, f64), PtmError> {
        let size = 4usize.pow(n_qubits as u32);
        if m.rows() != size || m.cols() != size {
            return Err(PtmError::DimensionMismatch(format!(
                "full PTM for {n_qubits} qubits must be {size}x{size}"
            )));
        }
        let mut tp_residual = (m[(0, 0)] - 1.0).abs();
        for j in 1..size {
            tp_residual = tp_residual.max(m[(0, j)].abs());
        }
        let b: Vec<f64> = (1..size).map(|i| m[(i, 0)]).collect();
        let w = RealMatrix::from_fn(size - 1, size - 1, |i, j| m[(i + 1, j + 1)]);
        Ok((Self::new(n_qubits, b, w)?, tp_residual))
    }

    pub fn to_full_matrix(&self) -> RealMatrix {
        let dim = self.dim();
        RealMatrix::from_fn(dim + 1, dim + 1, |i, j| match (i, j) {
            (0, 0) => 1.0,
            (0, _) => 0.0,
            (_, 0) => self.b[i - 1],
            _ => self.w[(i - 1, j - 1)],
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    /// Coherence-space dimension `4^N - 1`.
    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn influx(&self) -> &[f64] {
        &self.b
    }

    pub fn w(&self) -> &RealMatrix {
        &self.w
    }

    pub fn influx_norm(&self) -> f64 {
        self.b.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `r' = W r + b`.
    pub fn apply(&self, state: &CoherenceState) -> CoherenceState {
        assert_eq!(
            state.n_qubits(),
            self.n_qubits,
            "state/channel qubit count"
        );
        let mut r = self.w.matvec(state.components());
        for (ri, bi) in r.iter_mut().zip(&self.b) {
            *ri += bi;
        }
        CoherenceState::new(self.n_qubits, r).expect("dimension preserved")
    }

    /// Channel composition `self . inner` (apply `inner` first):
    /// `b = b_self + W_self b_inner`, `W = W_self W_inner`.
    pub fn compose(&self, inner: &Self) -> Self {
        assert_eq!(self.n_qubits, inner.n_qubits, "composition qubit count");
        let mut b = self.w.matvec(&inner.b);
        for (bi, si) in b.iter_mut().zip(&self.b) {
            *bi += si;
        }
        Self {
            n_qubits: self.n_qubits,
            b,
            w: self.w.mul(&inner.w),
            w_spectrum: OnceCell::new(),
        }
    }

    /// Eigenvalues of `W`, computed once and cached.
    pub fn w_eigenvalues(&self) -> &[Complex64] {
        self.w_spectrum
            .get_or_init(|| eigenvalues(&self.w).expect("finite square W"))
    }

    /// Spectral radius of `W`.
    pub fn w_spectral_radius(&self) -> f64 {
        self.w_eigenvalues()
            .iter()
            .map(|l| l.norm())
            .fold(0.0, f64::max)
    }
}

/// Kraus representation `{K_k}` with `sum_k K_k^dagger K_k = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausSet {
    n_qubits: usize,
    operators: Vec<ComplexMatrix>,
}

impl KrausSet {
    pub fn new(n_qubits: usize, operators: Vec<ComplexMatrix>) -> Result<Self, PtmError> {
        let dim = 1usize << n_qubits;
        if operators.is_empty() {
            return Err(PtmError::DimensionMismatch(
                "Kraus set needs at least one operator".into(),
            ));
        }
        for op in &operators {
            if op.rows() != dim || op.cols() != dim {
                return Err(PtmError::DimensionMismatch(format!(
                    "Kraus operators for {n_qubits} qubits must be {dim}x{dim}"
                )));
            }
        }
        let set = Self { n_qubits, operators };
        let dev = set.trace_preservation_deviation();
        if dev > TP_TOL {
            return Err(PtmError::NotTracePreserving(dev));
        }
        Ok(set)
    }

    pub fn from_unitary(n_qubits: usize, u: ComplexMatrix) -> Result<Self, PtmError> {
        Self::new(n_qubits, vec![u])
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn operators(&self) -> &[ComplexMatrix] {
        &self.operators
    }

    /// `max |sum_k K_k^dagger K_k - I|`.
    pub fn trace_preservation_deviation(&self) -> f64 {
        let dim = 1usize << self.n_qubits;
        let mut acc = ComplexMatrix::zeros(dim, dim);
        for k in &self.operators {
            acc = acc.add(&k.adjoint().mul(k));
        }
        acc.sub(&ComplexMatrix::identity(dim)).max_abs()
    }

    /// Direct density-matrix conjugation `rho -> sum_k K_k rho K_k^dagger`.
    pub fn apply_density(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        let dim = 1usize << self.n_qubits;
        let mut out = ComplexMatrix::zeros(dim, dim);
        for k in &self.operators {
            out = out.add(&k.mul(rho).mul(&k.adjoint()));
        }
        out
    }
}

/// Choi state of a channel (trace-one normalization for CPTP input).
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiMatrix {
    n_qubits: usize,
    c: ComplexMatrix,
}

impl ChoiMatrix {
    pub fn new(n_qubits: usize, c: ComplexMatrix) -> Result<Self, PtmError> {
        let size = 4usize.pow(n_qubits as u32);
        if c.rows() != size || c.cols() != size {
            return Err(PtmError::DimensionMismatch(format!(
                "Choi matrix for {n_qubits} qubits must be {size}x{size}"
            )));
        }
        Ok(Self { n_qubits, c })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.c
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let hermitized = self
            .c
            .add(&self.c.adjoint())
            .scale(Complex64::new(0.5, 0.0));
        let (eigs, _) = hermitian_eig(&hermitized).expect("square matrix");
        eigs.first().copied().unwrap_or(0.0)
    }
}

/// `O_{i,j} = (1/2^N) tr(P_i sum_k K_k P_j K_k^dagger)`.
pub fn ptm_from_kraus(basis: &PauliBasis, ks: &KrausSet) -> Result<BlockPtm, PtmError> {
    if basis.n_qubits() != ks.n_qubits() {
        return Err(PtmError::DimensionMismatch(
            "Kraus set and basis disagree on qubit count".into(),
        ));
    }
    let size = basis.size();
    let scale = 1.0 / basis.dim() as f64;
    let mut full = RealMatrix::zeros(size, size);
    for j in 0..size {
        let transformed = ks.apply_density(basis.string(j));
        for i in 0..size {
            full[(i, j)] = basis.string(i).mul(&transformed).trace().re * scale;
        }
    }
    let (ptm, tp_residual) = BlockPtm::from_full_matrix(basis.n_qubits(), &full)?;
    if tp_residual > TP_TOL {
        return Err(PtmError::FirstRowViolation(tp_residual));
    }
    Ok(ptm)
}

/// `C = (1/4^N) sum_{i,j} O_{i,j} P_j^T (x) P_i` from the full transfer matrix.
pub fn choi_matrix_from_ptm_matrix(basis: &PauliBasis, full: &RealMatrix) -> ComplexMatrix {
    let size = basis.size();
    assert_eq!(full.rows(), size, "transfer matrix size");
    let scale = 1.0 / size as f64;
    let mut c = ComplexMatrix::zeros(size, size);
    for i in 0..size {
        for j in 0..size {
            let coeff = full[(i, j)] * scale;
            if coeff == 0.0 {
                continue;
            }
            let term = basis.string(j).transpose().kron(basis.string(i));
            c = c.add(&term.scale(Complex64::new(coeff, 0.0)));
        }
    }
    c
}

pub fn choi_from_ptm(basis: &PauliBasis, ptm: &BlockPtm) -> Result<ChoiMatrix, PtmError> {
    if basis.n_qubits() != ptm.n_qubits() {
        return Err(PtmError::DimensionMismatch(
            "PTM and basis disagree on qubit count".into(),
        ));
    }
    let c = choi_matrix_from_ptm_matrix(basis, &ptm.to_full_matrix());
    ChoiMatrix::new(basis.n_qubits(), c)
}

/// Inverse expansion `O_{i,j} = tr[(P_j^T (x) P_i) C]`; the imaginary parts
/// vanish for Hermitian `C` and their maximum magnitude is returned.
pub fn ptm_matrix_from_choi(basis: &PauliBasis, choi: &ChoiMatrix) -> (RealMatrix, f64) {
    let size = basis.size();
    let mut full = RealMatrix::zeros(size, size);
    let mut max_imag = 0.0_f64;
    for i in 0..size {
        for j in 0..size {
            let probe = basis.string(j).transpose().kron(basis.string(i));
            let val = probe.mul(choi.matrix()).trace();
            full[(i, j)] = val.re;
            max_imag = max_imag.max(val.im.abs());
        }
    }
    (full, max_imag)
}

/// Block form of a Choi matrix known to describe a trace-preserving channel.
pub fn ptm_from_choi(basis: &PauliBasis, choi: &ChoiMatrix) -> Result<BlockPtm, PtmError> {
    if basis.n_qubits() != choi.n_qubits() {
        return Err(PtmError::DimensionMismatch(
            "Choi matrix and basis disagree on qubit count".into(),
        ));
    }
    let (full, _) = ptm_matrix_from_choi(basis, choi);
    let (ptm, tp_residual) = BlockPtm::from_full_matrix(basis.n_qubits(), &full)?;
    if tp_residual > 1e-7 {
        return Err(PtmError::FirstRowViolation(tp_residual));
    }
    Ok(ptm)
}

/// Kraus operators from the Choi eigendecomposition,
/// `K_k = sqrt(2^N lambda_k) unvec(v_k)`; eigenvalues below `1e-12` are dropped.
pub fn kraus_from_choi(basis: &PauliBasis, choi: &ChoiMatrix) -> Result<KrausSet, PtmError> {
    let dim = basis.dim();
    let hermitized = choi
        .matrix()
        .add(&choi.matrix().adjoint())
        .scale(Complex64::new(0.5, 0.0));
    let (eigenvalues, vectors) = hermitian_eig(&hermitized)?;
    let mut operators = Vec::new();
    for (k, &lambda) in eigenvalues.iter().enumerate() {
        if lambda < 1e-12 {
            continue;
        }
        let coeff = (lambda * dim as f64).sqrt();
        // Choi index (input, output) = row_in * dim + row_out
        let op = ComplexMatrix::from_fn(dim, dim, |out_row, in_col| {
            vectors[(in_col * dim + out_row, k)] * coeff
        });
        operators.push(op);
    }
    KrausSet::new(basis.n_qubits(), operators)
}

/// Diagnostic summary produced by [`validate_cptp`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CptpReport {
    pub tp_residual: f64,
    pub choi_min_eigenvalue: f64,
    pub choi_trace: f64,
    pub w_spectral_radius: f64,
    pub influx_norm: f64,
    pub unital: bool,
    pub is_cptp: bool,
}

/// Validates a block PTM: trace preservation is exact by construction, so the
/// report focuses on Choi positivity, the spectral radius and the influx.
pub fn validate_cptp(basis: &PauliBasis, ptm: &BlockPtm) -> Result<CptpReport, PtmError> {
    validate_cptp_matrix(basis, &ptm.to_full_matrix())
}

/// Validates a raw `4^N x 4^N` transfer matrix, flagging trace-preservation
/// violations in the first row.
pub fn validate_cptp_matrix(basis: &PauliBasis, full: &RealMatrix) -> Result<CptpReport, PtmError> {
    let size = basis.size();
    if full.rows() != size || full.cols() != size {
        return Err(PtmError::DimensionMismatch(format!(
            "transfer matrix must be {size}x{size}"
        )));
    }
    let mut tp_residual = (full[(0, 0)] - 1.0).abs();
    for j in 1..size {
        tp_residual = tp_residual.max(full[(0, j)].abs());
    }
    let choi = choi_matrix_from_ptm_matrix(basis, full);
    let hermitized = choi.add(&choi.adjoint()).scale(Complex64::new(0.5, 0.0));
    let (choi_eigs, _) = hermitian_eig(&hermitized)?;
    let choi_min_eigenvalue = choi_eigs.first().copied().unwrap_or(0.0);
    let choi_trace = choi.trace().re;

    let dim = size - 1;
    let w = RealMatrix::from_fn(dim, dim, |i, j| full[(i + 1, j + 1)]);
    let w_spectral_radius = eigenvalues(&w)?
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max);
    let influx_norm = (1..size)
        .map(|i| full[(i, 0)] * full[(i, 0)])
        .sum::<f64>()
        .sqrt();

    Ok(CptpReport {
        tp_residual,
        choi_min_eigenvalue,
        choi_trace,
        w_spectral_radius,
        influx_norm,
        unital: influx_norm < UNITAL_TOL,
        is_cptp: tp_residual <= 1e-7 && choi_min_eigenvalue >= CPTP_EIG_TOL,
    })
}

/// Alternating projections in Choi space: Hermitize, project onto the PSD
/// cone, re-impose trace preservation by resetting the PTM first row. Stops
/// when successive Choi iterates differ by less than `tol` in Frobenius norm.
pub fn project_to_cptp(
    basis: &PauliBasis,
    m: &RealMatrix,
    max_iters: usize,
    tol: f64,
) -> Result<BlockPtm, PtmError> {
    let size = basis.size();
    if m.rows() != size || m.cols() != size {
        return Err(PtmError::DimensionMismatch(format!(
            "transfer matrix must be {size}x{size}"
        )));
    }
    let mut current = m.clone();
    let mut previous_choi: Option<ComplexMatrix> = None;
    let mut step = f64::INFINITY;
    for iteration in 1..=max_iters {
        let choi = choi_matrix_from_ptm_matrix(basis, &current);
        let hermitized = choi.add(&choi.adjoint()).scale(Complex64::new(0.5, 0.0));
        let psd = psd_project(&hermitized)?;
        if let Some(prev) = &previous_choi {
            step = psd.sub(prev).frobenius_norm();
        }
        let converged = step < tol;
        let (mut full, _) = ptm_matrix_from_choi(basis, &ChoiMatrix::new(basis.n_qubits(), psd.clone())?);
        full[(0, 0)] = 1.0;
        for j in 1..size {
            full[(0, j)] = 0.0;
        }
        current = full;
        previous_choi = Some(psd);
        if converged {
            let report = validate_cptp_matrix(basis, &current)?;
            if report.choi_min_eigenvalue < CPTP_EIG_TOL {
                return Err(PtmError::ProjectionInvalid(report.choi_min_eigenvalue));
            }
            let (ptm, _) = BlockPtm::from_full_matrix(basis.n_qubits(), &current)?;
            return Ok(ptm);
        }
        let _ = iteration;
    }
    Err(PtmError::ProjectionStalled {
        iterations: max_iters,
        residual: step,
    })
}

// ---------------------------------------------------------------------------
// JSON schemas
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockPtmJson {
    pub normalization: String,
    pub n_qubits: usize,
    pub b: Vec<f64>,
    /// `W` entries, row-major.
    pub w_row_major: Vec<f64>,
}

impl From<&BlockPtm> for BlockPtmJson {
    fn from(ptm: &BlockPtm) -> Self {
        Self {
            normalization: PTM_NORMALIZATION_TAG.to_string(),
            n_qubits: ptm.n_qubits,
            b: ptm.b.clone(),
            w_row_major: ptm.w.data().to_vec(),
        }
    }
}

impl TryFrom<BlockPtmJson> for BlockPtm {
    type Error = PtmError;
    fn try_from(json: BlockPtmJson) -> Result<Self, PtmError> {
        if json.normalization != PTM_NORMALIZATION_TAG {
            return Err(PtmError::UnknownNormalization(json.normalization));
        }
        let dim = 4usize.pow(json.n_qubits as u32) - 1;
        let w = RealMatrix::new(dim, dim, json.w_row_major)
            .map_err(|e| PtmError::DimensionMismatch(e.to_string()))?;
        BlockPtm::new(json.n_qubits, json.b, w)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KrausSetJson {
    pub normalization: String,
    pub n_qubits: usize,
    /// One operator per entry; each is row-major with interleaved
    /// `[re, im, re, im, ...]` scalars.
    pub operators_interleaved: Vec<Vec<f64>>,
}

impl From<&KrausSet> for KrausSetJson {
    fn from(ks: &KrausSet) -> Self {
        let operators_interleaved = ks
            .operators
            .iter()
            .map(|op| {
                op.data()
                    .iter()
                    .flat_map(|z| [z.re, z.im])
                    .collect::<Vec<f64>>()
            })
            .collect();
        Self {
            normalization: PTM_NORMALIZATION_TAG.to_string(),
            n_qubits: ks.n_qubits,
            operators_interleaved,
        }
    }
}

impl TryFrom<KrausSetJson> for KrausSet {
    type Error = PtmError;
    fn try_from(json: KrausSetJson) -> Result<Self, PtmError> {
        if json.normalization != PTM_NORMALIZATION_TAG {
            return Err(PtmError::UnknownNormalization(json.normalization));
        }
        let dim = 1usize << json.n_qubits;
        let operators = json
            .operators_interleaved
            .iter()
            .map(|flat| {
                let entries: Vec<Complex64> = flat
                    .chunks(2)
                    .map(|pair| Complex64::new(pair[0], pair[1]))
                    .collect();
                ComplexMatrix::new(dim, dim, entries)
                    .map_err(|e| PtmError::DimensionMismatch(e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        KrausSet::new(json.n_qubits, operators)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoherenceStateJson {
    pub normalization: String,
    pub n_qubits: usize,
    pub r: Vec<f64>,
}

impl From<&CoherenceState> for CoherenceStateJson {
    fn from(s: &CoherenceState) -> Self {
        Self {
            normalization: PTM_NORMALIZATION_TAG.to_string(),
            n_qubits: s.n_qubits(),
            r: s.components().to_vec(),
        }
    }
}

impl TryFrom<CoherenceStateJson> for CoherenceState {
    type Error = PtmError;
    fn try_from(json: CoherenceStateJson) -> Result<Self, PtmError> {
        if json.normalization != PTM_NORMALIZATION_TAG {
            return Err(PtmError::UnknownNormalization(json.normalization));
        }
        Ok(CoherenceState::new(json.n_qubits, json.r)?)
    }
}
