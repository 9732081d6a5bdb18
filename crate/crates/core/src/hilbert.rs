//! Operators and states on the composite Hilbert space of N two-level systems
//! (and the single three-level system used by the qutrit model).
//!
//! Basis convention: site 1 is the most significant tensor factor, so the
//! single-excitation state |φ_1⟩ = |10...0⟩ maps to index 2^(N−1). This
//! matches left-to-right ket notation.

use ndarray::{linalg::kron, Array1, Array2};

use crate::error::{Error, Result};
use crate::linalg::{self, hermiticity_deviation, max_abs};
use crate::C64;

/// Tolerances for the density-matrix invariants.
pub const HERMITICITY_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-9;
pub const POSITIVITY_TOL: f64 = 1e-9;

/// Shape of a composite Hilbert space: a list of local dimensions, one per
/// site.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HilbertSpec {
    local_dims: Vec<usize>,
}

impl HilbertSpec {
    pub fn new(local_dims: Vec<usize>) -> Result<Self> {
        if local_dims.is_empty() {
            return Err(Error::invalid("HilbertSpec: no sites"));
        }
        if local_dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid("HilbertSpec: zero local dimension"));
        }
        let spec = Self { local_dims };
        if spec.total_dim() < 2 {
            return Err(Error::invalid("HilbertSpec: total dimension must be >= 2"));
        }
        Ok(spec)
    }

    /// A chain of `n` qubits.
    pub fn qubits(n: usize) -> Result<Self> {
        Self::new(vec![2; n])
    }

    /// A single three-level system.
    pub fn qutrit() -> Self {
        Self { local_dims: vec![3] }
    }

    pub fn num_sites(&self) -> usize {
        self.local_dims.len()
    }

    pub fn local_dims(&self) -> &[usize] {
        &self.local_dims
    }

    pub fn total_dim(&self) -> usize {
        self.local_dims.iter().product()
    }
}

/// Dense operator on a composite Hilbert space.
#[derive(Debug, Clone)]
pub struct Operator {
    matrix: Array2<C64>,
    hermitian_hint: bool,
}

impl Operator {
    /// Wrap a square matrix without asserting Hermiticity.
    pub fn new(matrix: Array2<C64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::invalid(format!(
                "Operator: matrix must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { matrix, hermitian_hint: false })
    }

    /// Wrap a matrix that is asserted Hermitian (checked to 1e-12 relative).
    pub fn hermitian(matrix: Array2<C64>) -> Result<Self> {
        let op = Self::new(matrix)?;
        let scale = max_abs(&op.matrix).max(f64::MIN_POSITIVE);
        let dev = hermiticity_deviation(&op.matrix);
        if dev >= 1e-12 * scale {
            return Err(Error::invalid(format!(
                "Operator: hermitian_hint set but max|A - A†| = {dev:.3e} (scale {scale:.3e})"
            )));
        }
        Ok(Self { matrix: op.matrix, hermitian_hint: true })
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Array2<C64> {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_hermitian_hinted(&self) -> bool {
        self.hermitian_hint
    }
}

/// Normalized pure state.
#[derive(Debug, Clone)]
pub struct PureState {
    amplitudes: Array1<C64>,
}

impl PureState {
    pub fn new(amplitudes: Array1<C64>) -> Result<Self> {
        let norm = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() >= 1e-12 {
            return Err(Error::invalid(format!(
                "PureState: norm must be 1 (got {norm:.15})"
            )));
        }
        Ok(Self { amplitudes })
    }

    /// Normalize an arbitrary nonzero vector.
    pub fn normalized(mut amplitudes: Array1<C64>) -> Result<Self> {
        let norm = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm <= 0.0 {
            return Err(Error::invalid("PureState: zero vector"));
        }
        amplitudes.mapv_inplace(|z| z / norm);
        Ok(Self { amplitudes })
    }

    pub fn amplitudes(&self) -> &Array1<C64> {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    /// Rank-1 projector |ψ⟩⟨ψ|.
    pub fn projector(&self) -> Array2<C64> {
        let d = self.dim();
        let mut p = Array2::<C64>::zeros((d, d));
        for i in 0..d {
            for j in 0..d {
                p[[i, j]] = self.amplitudes[i] * self.amplitudes[j].conj();
            }
        }
        p
    }

    pub fn inner(&self, other: &PureState) -> C64 {
        self.amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }
}

/// Hermitian, unit-trace, positive-semidefinite matrix (all to tolerance).
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    matrix: Array2<C64>,
}

impl DensityMatrix {
    /// Validate all three invariants (Hermiticity, trace, positivity).
    pub fn new(matrix: Array2<C64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::invalid("DensityMatrix: matrix must be square"));
        }
        let scale = max_abs(&matrix).max(f64::MIN_POSITIVE);
        let herm = hermiticity_deviation(&matrix);
        if herm >= HERMITICITY_TOL * scale {
            return Err(Error::invalid(format!(
                "DensityMatrix: not Hermitian (max|ρ - ρ†| = {herm:.3e}, scale {scale:.3e})"
            )));
        }
        let tr = linalg::trace(&matrix);
        if (tr.re - 1.0).abs() >= TRACE_TOL || tr.im.abs() >= TRACE_TOL {
            return Err(Error::invalid(format!(
                "DensityMatrix: trace must be 1 (got {tr})"
            )));
        }
        let lambda_min = linalg::min_eigenvalue(&matrix)?;
        if lambda_min < -POSITIVITY_TOL {
            return Err(Error::invalid(format!(
                "DensityMatrix: negative eigenvalue {lambda_min:.3e}"
            )));
        }
        Ok(Self { matrix })
    }

    /// |ψ⟩⟨ψ| for a pure state.
    pub fn from_pure(psi: &PureState) -> Self {
        Self { matrix: psi.projector() }
    }

    /// Ground-state density matrix |0...0⟩⟨0...0| of dimension `dim` with the
    /// ground state at basis index `index`.
    pub fn basis_state(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::invalid("DensityMatrix: basis index out of range"));
        }
        let mut m = Array2::<C64>::zeros((dim, dim));
        m[[index, index]] = C64::new(1.0, 0.0);
        Ok(Self { matrix: m })
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Array2<C64> {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Local lowering operator σ⁻ = |0⟩⟨1| on a single qubit.
pub fn sigma_minus() -> Array2<C64> {
    let mut m = Array2::<C64>::zeros((2, 2));
    m[[0, 1]] = C64::new(1.0, 0.0);
    m
}

/// Local raising operator σ⁺ = |1⟩⟨0| on a single qubit.
pub fn sigma_plus() -> Array2<C64> {
    let mut m = Array2::<C64>::zeros((2, 2));
    m[[1, 0]] = C64::new(1.0, 0.0);
    m
}

/// Local σ_z = |1⟩⟨1| − |0⟩⟨0| on a single qubit.
pub fn sigma_z() -> Array2<C64> {
    let mut m = Array2::<C64>::zeros((2, 2));
    m[[0, 0]] = C64::new(-1.0, 0.0);
    m[[1, 1]] = C64::new(1.0, 0.0);
    m
}

/// Embed a local operator at site `site` (0-based) into the full space:
/// identity ⊗ ... ⊗ local_op ⊗ ... ⊗ identity.
pub fn site_operator(spec: &HilbertSpec, local_op: &Array2<C64>, site: usize) -> Result<Operator> {
    if site >= spec.num_sites() {
        return Err(Error::invalid(format!(
            "site_operator: site {site} out of range for {} sites",
            spec.num_sites()
        )));
    }
    let d_local = spec.local_dims()[site];
    if local_op.nrows() != d_local || local_op.ncols() != d_local {
        return Err(Error::invalid(format!(
            "site_operator: local operator is {}x{} but site {site} has dimension {d_local}",
            local_op.nrows(),
            local_op.ncols()
        )));
    }
    let left: usize = spec.local_dims()[..site].iter().product();
    let right: usize = spec.local_dims()[site + 1..].iter().product();
    let m = kron(&kron(&Array2::<C64>::eye(left), local_op), &Array2::<C64>::eye(right));
    Operator::new(m)
}

/// Computational-basis ket for the given per-site level indices.
pub fn basis_ket(spec: &HilbertSpec, occupation: &[usize]) -> Result<PureState> {
    if occupation.len() != spec.num_sites() {
        return Err(Error::invalid(format!(
            "basis_ket: occupation has {} entries for {} sites",
            occupation.len(),
            spec.num_sites()
        )));
    }
    let mut index = 0;
    for (&occ, &dim) in occupation.iter().zip(spec.local_dims()) {
        if occ >= dim {
            return Err(Error::invalid(format!(
                "basis_ket: occupation {occ} out of range for local dimension {dim}"
            )));
        }
        index = index * dim + occ;
    }
    let mut amplitudes = Array1::<C64>::zeros(spec.total_dim());
    amplitudes[index] = C64::new(1.0, 0.0);
    PureState::new(amplitudes)
}

/// Basis index of the single-excitation state |φ_j⟩ (0-based `j`) for a qubit
/// chain: site 1 most significant gives index 2^(N−1−j).
pub fn phi_index(n: usize, j: usize) -> usize {
    1 << (n - 1 - j)
}

/// Sign of a Bell state superposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// Two-qubit Bell state (|10⟩ ± |01⟩)/√2.
pub fn make_bell(sign: Sign) -> PureState {
    let mut amplitudes = Array1::<C64>::zeros(4);
    let a = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    amplitudes[2] = a; // |10⟩
    amplitudes[1] = sign.value() * a; // |01⟩
    PureState::new(amplitudes).expect("Bell state is normalized by construction")
}

/// N-partite W state (1/√N) Σ_j |φ_j⟩.
pub fn make_w(n: usize) -> Result<PureState> {
    if n < 2 {
        return Err(Error::invalid("make_w: N must be >= 2"));
    }
    let dim = 1usize << n;
    let mut amplitudes = Array1::<C64>::zeros(dim);
    let a = C64::new(1.0 / (n as f64).sqrt(), 0.0);
    for j in 0..n {
        amplitudes[phi_index(n, j)] = a;
    }
    PureState::new(amplitudes)
}

/// Fidelity F = ⟨ψ|ρ|ψ⟩ of a density matrix against a pure target, clamped to
/// [0, 1].
pub fn fidelity(rho: &DensityMatrix, target: &PureState) -> Result<f64> {
    fidelity_raw(rho.matrix(), target)
}

/// Fidelity against a raw density-matrix array (no invariant re-validation).
pub fn fidelity_raw(rho: &Array2<C64>, target: &PureState) -> Result<f64> {
    let d = target.dim();
    if rho.nrows() != d || rho.ncols() != d {
        return Err(Error::invalid(format!(
            "fidelity: dimension mismatch ({}x{} vs state {d})",
            rho.nrows(),
            rho.ncols()
        )));
    }
    let mut val = C64::new(0.0, 0.0);
    for i in 0..d {
        let ai = target.amplitudes()[i].conj();
        for j in 0..d {
            val += ai * rho[[i, j]] * target.amplitudes()[j];
        }
    }
    Ok(val.re.clamp(0.0, 1.0))
}
