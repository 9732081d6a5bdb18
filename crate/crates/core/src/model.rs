//! Physical chain descriptions and the matrices entering the master equation:
//! the cooperative decay matrix κ_jm, the waveguide-mediated coherent coupling
//! λ_jm, the drive pulse, and the W-state coupling condition.
//!
//! Angular frequencies and rates are rad/μs, times μs, positions m,
//! microwave speed m/μs.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::hilbert::Operator;
use crate::C64;

/// Convert a "frequency/2π in MHz" value to angular frequency in rad/μs.
pub fn mhz_to_angular(nu_mhz: f64) -> f64 {
    std::f64::consts::TAU * nu_mhz
}

/// Rectangular drive pulse: Rabi frequency and duration (possibly infinite).
///
/// The Heaviside boundary is Θ(0) = 1: the drive is still on at t = t0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrivePulse {
    pub rabi: f64,
    pub duration: f64,
}

impl DrivePulse {
    pub fn new(rabi: f64, duration: f64) -> Result<Self> {
        if rabi < 0.0 || rabi.is_nan() {
            return Err(Error::invalid("DrivePulse: rabi must be >= 0"));
        }
        if !(duration > 0.0) {
            return Err(Error::invalid("DrivePulse: duration must be positive"));
        }
        Ok(Self { rabi, duration })
    }

    /// Drive amplitude at time `t` (Θ(t0 − t)·Ω with Θ(0) = 1).
    pub fn amplitude_at(&self, t: f64) -> f64 {
        if t <= self.duration {
            self.rabi
        } else {
            0.0
        }
    }
}

/// Ideal chain: qubits at perfect waveguide positions, described by relative
/// couplings c_j and the local decay rate κ_11 of the driven qubit.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    pub n: usize,
    pub omega_q: f64,
    pub omega_d: f64,
    pub kappa_11: f64,
    pub c: Vec<f64>,
    pub gamma: f64,
    pub gamma_phi: f64,
    pub drive: DrivePulse,
}

impl ChainSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        omega_q: f64,
        omega_d: f64,
        kappa_11: f64,
        c: Vec<f64>,
        gamma: f64,
        gamma_phi: f64,
        drive: DrivePulse,
    ) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("ChainSpec: N must be >= 2"));
        }
        if c.len() != n {
            return Err(Error::invalid(format!(
                "ChainSpec: c has {} entries for N = {n}",
                c.len()
            )));
        }
        if c[0] == 0.0 {
            return Err(Error::invalid("ChainSpec: c_1 must be nonzero (the driven qubit must couple)"));
        }
        for (name, rate) in [("kappa_11", kappa_11), ("gamma", gamma), ("gamma_phi", gamma_phi)] {
            if rate < 0.0 || rate.is_nan() {
                return Err(Error::invalid(format!("ChainSpec: {name} must be >= 0")));
            }
        }
        Ok(Self { n, omega_q, omega_d, kappa_11, c, gamma, gamma_phi, drive })
    }

    /// Detuning Δ = ω_q − ω_d of the qubits from the drive.
    pub fn detuning(&self) -> f64 {
        self.omega_q - self.omega_d
    }

    /// Collective decay rate κ inferred from κ_11 = 2 c_1² κ.
    pub fn collective_kappa(&self) -> f64 {
        self.kappa_11 / (2.0 * self.c[0] * self.c[0])
    }
}

/// Chain described by explicit qubit positions along the waveguide.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionalChainSpec {
    pub n: usize,
    pub omega_q: f64,
    pub omega_d: f64,
    /// Microwave speed in m/μs.
    pub velocity: f64,
    /// Qubit positions in m.
    pub x: Vec<f64>,
    /// Dimensionless couplings g_j, normalized so 2π g_j² ω_q is a rate in
    /// rad/μs. May carry signs.
    pub g: Vec<f64>,
    pub gamma: f64,
    pub gamma_phi: f64,
    pub drive: DrivePulse,
}

impl PositionalChainSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        omega_q: f64,
        omega_d: f64,
        velocity: f64,
        x: Vec<f64>,
        g: Vec<f64>,
        gamma: f64,
        gamma_phi: f64,
        drive: DrivePulse,
    ) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("PositionalChainSpec: N must be >= 2"));
        }
        if x.len() != n || g.len() != n {
            return Err(Error::invalid("PositionalChainSpec: x and g must have N entries"));
        }
        if !(omega_q > 0.0) || !(velocity > 0.0) {
            return Err(Error::invalid("PositionalChainSpec: omega_q and velocity must be positive"));
        }
        if x.iter().any(|v| !v.is_finite()) || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("PositionalChainSpec: positions and couplings must be finite"));
        }
        for (name, rate) in [("gamma", gamma), ("gamma_phi", gamma_phi)] {
            if rate < 0.0 || rate.is_nan() {
                return Err(Error::invalid(format!("PositionalChainSpec: {name} must be >= 0")));
            }
        }
        Ok(Self { n, omega_q, omega_d, velocity, x, g, gamma, gamma_phi, drive })
    }

    /// Wave vector k = ω_q / υ in rad/m.
    pub fn wave_vector(&self) -> f64 {
        self.omega_q / self.velocity
    }

    /// Ideal spacing λ₀ = π/k in m.
    pub fn lambda0(&self) -> f64 {
        std::f64::consts::PI / self.wave_vector()
    }

    pub fn detuning(&self) -> f64 {
        self.omega_q - self.omega_d
    }
}

/// Symmetric cooperative-decay matrix κ_jm in rad/μs.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayMatrix {
    k: Array2<f64>,
}

impl DecayMatrix {
    pub fn new(k: Array2<f64>) -> Result<Self> {
        let n = k.nrows();
        if k.ncols() != n {
            return Err(Error::invalid("DecayMatrix: must be square"));
        }
        let scale = k.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for j in 0..n {
            for m in (j + 1)..n {
                if (k[[j, m]] - k[[m, j]]).abs() > 1e-12 * scale {
                    return Err(Error::invalid("DecayMatrix: must be symmetric"));
                }
            }
        }
        Ok(Self { k })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.k
    }

    pub fn n(&self) -> usize {
        self.k.nrows()
    }

    /// Σ_j κ_jj, the bright-state decay rate.
    pub fn diagonal_sum(&self) -> f64 {
        (0..self.n()).map(|j| self.k[[j, j]]).sum()
    }
}

/// Symmetric coherent-coupling matrix λ_jm in rad/μs (zero diagonal used).
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    lambda: Array2<f64>,
}

impl CouplingMatrix {
    pub fn new(lambda: Array2<f64>) -> Result<Self> {
        let n = lambda.nrows();
        if lambda.ncols() != n {
            return Err(Error::invalid("CouplingMatrix: must be square"));
        }
        let scale = lambda.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for j in 0..n {
            for m in (j + 1)..n {
                if (lambda[[j, m]] - lambda[[m, j]]).abs() > 1e-12 * scale {
                    return Err(Error::invalid("CouplingMatrix: must be symmetric"));
                }
            }
        }
        Ok(Self { lambda })
    }

    pub fn zeros(n: usize) -> Self {
        Self { lambda: Array2::zeros((n, n)) }
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.lambda
    }

    pub fn max_abs(&self) -> f64 {
        self.lambda.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// κ_jm = 2 c_j c_m κ with κ inferred from κ_11 = 2 c_1² κ.
pub fn ideal_decay_matrix(spec: &ChainSpec) -> Result<DecayMatrix> {
    if spec.c[0] == 0.0 {
        return Err(Error::invalid("ideal_decay_matrix: c_1 must be nonzero"));
    }
    let kappa = spec.collective_kappa();
    let n = spec.n;
    let mut k = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        for m in 0..n {
            k[[j, m]] = 2.0 * spec.c[j] * spec.c[m] * kappa;
        }
    }
    // The (1,1) entry is κ_11 by construction; pin it exactly.
    k[[0, 0]] = spec.kappa_11;
    DecayMatrix::new(k)
}

/// Resonant waveguide-mediated couplings from qubit positions:
/// λ_jm = 2π g_j g_m ω_q sin(k|x_j−x_m|), κ_jm = 4π g_j g_m ω_q cos(k|x_j−x_m|).
pub fn positional_couplings(spec: &PositionalChainSpec) -> Result<(CouplingMatrix, DecayMatrix)> {
    if !(spec.omega_q > 0.0) || !(spec.velocity > 0.0) {
        return Err(Error::invalid("positional_couplings: omega_q and velocity must be positive"));
    }
    let n = spec.n;
    let k_wave = spec.wave_vector();
    let mut lambda = Array2::<f64>::zeros((n, n));
    let mut kappa = Array2::<f64>::zeros((n, n));
    let two_pi = std::f64::consts::TAU;
    for j in 0..n {
        for m in 0..n {
            let phase = k_wave * (spec.x[j] - spec.x[m]).abs();
            let gg = spec.g[j] * spec.g[m] * spec.omega_q;
            lambda[[j, m]] = two_pi * gg * phase.sin();
            kappa[[j, m]] = 2.0 * two_pi * gg * phase.cos();
        }
    }
    Ok((CouplingMatrix::new(lambda)?, DecayMatrix::new(kappa)?))
}

/// Either chain description, as consumed by the preparation protocol.
#[derive(Debug, Clone, PartialEq)]
pub enum Chain {
    Ideal(ChainSpec),
    Positional(PositionalChainSpec),
}

impl Chain {
    pub fn n(&self) -> usize {
        match self {
            Chain::Ideal(s) => s.n,
            Chain::Positional(s) => s.n,
        }
    }

    pub fn gamma(&self) -> f64 {
        match self {
            Chain::Ideal(s) => s.gamma,
            Chain::Positional(s) => s.gamma,
        }
    }

    pub fn gamma_phi(&self) -> f64 {
        match self {
            Chain::Ideal(s) => s.gamma_phi,
            Chain::Positional(s) => s.gamma_phi,
        }
    }

    pub fn drive(&self) -> DrivePulse {
        match self {
            Chain::Ideal(s) => s.drive,
            Chain::Positional(s) => s.drive,
        }
    }

    pub fn detuning(&self) -> f64 {
        match self {
            Chain::Ideal(s) => s.detuning(),
            Chain::Positional(s) => s.detuning(),
        }
    }

    /// Cooperative decay and coherent coupling matrices.
    pub fn couplings(&self) -> Result<(CouplingMatrix, DecayMatrix)> {
        match self {
            Chain::Ideal(s) => Ok((CouplingMatrix::zeros(s.n), ideal_decay_matrix(s)?)),
            Chain::Positional(s) => positional_couplings(s),
        }
    }

    /// κ_11 (local decay rate of the driven qubit).
    pub fn kappa_11(&self) -> Result<f64> {
        Ok(self.couplings()?.1.matrix()[[0, 0]])
    }

    pub fn with_drive(&self, drive: DrivePulse) -> Chain {
        let mut chain = self.clone();
        match &mut chain {
            Chain::Ideal(s) => s.drive = drive,
            Chain::Positional(s) => s.drive = drive,
        }
        chain
    }
}

/// The coupling vector (N−1, −1, ..., −1) that turns the reachable dark state
/// into the N-partite W state.
pub fn w_coupling_vector(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::invalid("w_coupling_vector: N must be >= 2"));
    }
    let mut c = vec![-1.0; n];
    c[0] = (n - 1) as f64;
    Ok(c)
}

// ---------------------------------------------------------------------------
// Basis-aware chain operators
// ---------------------------------------------------------------------------

/// Representation basis for chain simulations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisMode {
    /// The full 2^N-dimensional space.
    Full,
    /// States with at most this many excitations (dimension
    /// 1 + N + N(N−1)/2 + ... ).
    ExcitationTruncated(usize),
}

impl BasisMode {
    pub fn two_excitation() -> Self {
        BasisMode::ExcitationTruncated(2)
    }
}

/// Site operators of an N-qubit chain materialized in the active basis.
///
/// Basis states are occupation bitmasks (bit N−1−j holds site j, matching the
/// [`hilbert`] index convention) listed in ascending numeric order, so in the
/// full basis the state index equals the bitmask.
#[derive(Debug, Clone)]
pub struct ChainOperators {
    n: usize,
    mode: BasisMode,
    states: Vec<u64>,
    sminus: Vec<Array2<C64>>,
    splus: Vec<Array2<C64>>,
    /// σ_j^z diagonal (entry per basis state).
    sz_diag: Vec<Vec<f64>>,
    phi_indices: Vec<usize>,
}

impl ChainOperators {
    pub fn build(n: usize, mode: BasisMode) -> Result<Self> {
        if n < 1 || n > 24 {
            return Err(Error::invalid("ChainOperators: N out of supported range"));
        }
        let states: Vec<u64> = match mode {
            BasisMode::Full => (0..(1u64 << n)).collect(),
            BasisMode::ExcitationTruncated(max_exc) => {
                if max_exc < 1 {
                    return Err(Error::invalid("ChainOperators: truncation must keep >= 1 excitation"));
                }
                (0..(1u64 << n)).filter(|s| s.count_ones() as usize <= max_exc).collect()
            }
        };
        let dim = states.len();
        let index_of = |s: u64| -> Option<usize> { states.binary_search(&s).ok() };

        let mut sminus = Vec::with_capacity(n);
        let mut splus = Vec::with_capacity(n);
        let mut sz_diag = Vec::with_capacity(n);
        for j in 0..n {
            let bit = 1u64 << (n - 1 - j);
            let mut sm = Array2::<C64>::zeros((dim, dim));
            let mut sp = Array2::<C64>::zeros((dim, dim));
            let mut sz = vec![0.0; dim];
            for (col, &s) in states.iter().enumerate() {
                if s & bit != 0 {
                    sz[col] = 1.0;
                    let t = s & !bit;
                    let row = index_of(t).expect("lowering stays in the basis");
                    sm[[row, col]] = C64::new(1.0, 0.0);
                } else {
                    sz[col] = -1.0;
                    // Raising may leave a truncated basis; those matrix
                    // elements are projected away.
                    if let Some(row) = index_of(s | bit) {
                        sp[[row, col]] = C64::new(1.0, 0.0);
                    }
                }
            }
            sminus.push(sm);
            splus.push(sp);
            sz_diag.push(sz);
        }

        let phi_indices = (0..n)
            .map(|j| {
                let mask = 1u64 << (n - 1 - j);
                index_of(mask).expect("single-excitation states are always kept")
            })
            .collect();

        Ok(Self { n, mode, states, sminus, splus, sz_diag, phi_indices })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn mode(&self) -> BasisMode {
        self.mode
    }

    /// Index of the all-ground basis state.
    pub fn ground_index(&self) -> usize {
        0
    }

    /// Index of the single-excitation state |φ_j⟩ (0-based site `j`).
    pub fn phi_index(&self, j: usize) -> usize {
        self.phi_indices[j]
    }

    pub fn sigma_minus(&self, j: usize) -> &Array2<C64> {
        &self.sminus[j]
    }

    pub fn sigma_plus(&self, j: usize) -> &Array2<C64> {
        &self.splus[j]
    }

    pub fn sigma_z_diag(&self, j: usize) -> &[f64] {
        &self.sz_diag[j]
    }

    /// State vector with the given amplitudes on |φ_j⟩ (zero elsewhere),
    /// normalized.
    pub fn single_excitation_state(&self, amplitudes: &[f64]) -> Result<Array1<C64>> {
        if amplitudes.len() != self.n {
            return Err(Error::invalid("single_excitation_state: need one amplitude per site"));
        }
        let norm = amplitudes.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::invalid("single_excitation_state: zero vector"));
        }
        let mut v = Array1::<C64>::zeros(self.dim());
        for (j, &a) in amplitudes.iter().enumerate() {
            v[self.phi_indices[j]] = C64::new(a / norm, 0.0);
        }
        Ok(v)
    }

    /// The W state (1/√N) Σ_j |φ_j⟩ in this basis.
    pub fn w_state(&self) -> Array1<C64> {
        self.single_excitation_state(&vec![1.0; self.n])
            .expect("uniform amplitudes are valid")
    }

    /// Hamiltonian in the frame rotating at the drive frequency:
    /// H = Δ Σ_j σ_j^+σ_j^− + Σ_{j<m} λ_jm(σ_j^+σ_m^− + h.c.) + drive·(σ_1^+ + σ_1^−).
    pub fn hamiltonian(
        &self,
        detuning: f64,
        coupling: &CouplingMatrix,
        drive_amplitude: f64,
    ) -> Array2<C64> {
        let dim = self.dim();
        let mut h = Array2::<C64>::zeros((dim, dim));
        if detuning != 0.0 {
            for (col, &s) in self.states.iter().enumerate() {
                h[[col, col]] += C64::new(detuning * s.count_ones() as f64, 0.0);
            }
        }
        let lam = coupling.matrix();
        for j in 0..self.n {
            for m in (j + 1)..self.n {
                let l = lam[[j, m]];
                if l != 0.0 {
                    let hop = self.splus[j].dot(&self.sminus[m]);
                    h.scaled_add(C64::new(l, 0.0), &hop);
                    let hop_t = self.splus[m].dot(&self.sminus[j]);
                    h.scaled_add(C64::new(l, 0.0), &hop_t);
                }
            }
        }
        if drive_amplitude != 0.0 {
            h.scaled_add(C64::new(drive_amplitude, 0.0), &self.splus[0]);
            h.scaled_add(C64::new(drive_amplitude, 0.0), &self.sminus[0]);
        }
        h
    }
}

/// Full-space rotating-frame Hamiltonian at time `t`.
pub fn rotating_frame_hamiltonian(chain: &Chain, t: f64) -> Result<Operator> {
    if t < 0.0 {
        return Err(Error::invalid("rotating_frame_hamiltonian: t must be >= 0"));
    }
    let ops = ChainOperators::build(chain.n(), BasisMode::Full)?;
    let (lambda, _) = chain.couplings()?;
    let drive = chain.drive().amplitude_at(t);
    let h = ops.hamiltonian(chain.detuning(), &lambda, drive);
    Operator::hermitian(h)
}

/// Collective jump operator J = √(2κ) Σ_j c_j σ_j^− of the ideal chain, in the
/// full basis. The dissipator JρJ† − ½{J†J, ρ} equals the κ_jm double sum.
pub fn collective_jump_operator(spec: &ChainSpec) -> Result<Operator> {
    let ops = ChainOperators::build(spec.n, BasisMode::Full)?;
    Operator::new(collective_jump_matrix(spec, &ops))
}

/// Collective jump operator in an arbitrary basis.
pub fn collective_jump_matrix(spec: &ChainSpec, ops: &ChainOperators) -> Array2<C64> {
    let amp = (2.0 * spec.collective_kappa()).sqrt();
    let dim = ops.dim();
    let mut j_op = Array2::<C64>::zeros((dim, dim));
    for j in 0..spec.n {
        j_op.scaled_add(C64::new(amp * spec.c[j], 0.0), ops.sigma_minus(j));
    }
    j_op
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{self, basis_ket, make_bell, HilbertSpec, Sign};
    use crate::linalg;
    use approx::assert_abs_diff_eq;

    const TAU: f64 = std::f64::consts::TAU;

    fn bell_chain(rabi_mhz: f64) -> ChainSpec {
        ChainSpec::new(
            2,
            mhz_to_angular(5000.0),
            mhz_to_angular(5000.0),
            mhz_to_angular(40.0),
            vec![1.0, -1.0],
            0.0,
            0.0,
            DrivePulse::new(mhz_to_angular(rabi_mhz), f64::INFINITY).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn ideal_decay_matrix_bell_configuration() {
        let spec = bell_chain(8.0);
        let k = ideal_decay_matrix(&spec).unwrap();
        assert_abs_diff_eq!(k.matrix()[[0, 0]] / TAU, 40.0, epsilon = 1e-12);
        assert_abs_diff_eq!(k.matrix()[[1, 1]] / TAU, 40.0, epsilon = 1e-12);
        assert_abs_diff_eq!(k.matrix()[[0, 1]] / TAU, -40.0, epsilon = 1e-12);
    }

    #[test]
    fn ideal_decay_matrix_w_scaling() {
        for n in [3, 5, 8] {
            let c = w_coupling_vector(n).unwrap();
            let spec = ChainSpec::new(
                n,
                0.0,
                0.0,
                TAU * 90.0,
                c,
                0.0,
                0.0,
                DrivePulse::new(0.0, 1.0).unwrap(),
            )
            .unwrap();
            let k = ideal_decay_matrix(&spec).unwrap();
            let expect = TAU * 90.0 / ((n - 1) as f64).powi(2);
            for j in 1..n {
                assert_abs_diff_eq!(k.matrix()[[j, j]], expect, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn ideal_decay_matrix_is_rank_one_psd() {
        let spec = ChainSpec::new(
            4,
            0.0,
            0.0,
            1.7,
            vec![0.4, -1.3, 2.2, 0.9],
            0.0,
            0.0,
            DrivePulse::new(0.0, 1.0).unwrap(),
        )
        .unwrap();
        let k = ideal_decay_matrix(&spec).unwrap();
        let kc = k.matrix().mapv(|v| C64::new(v, 0.0));
        let (vals, _) = linalg::eigh(&kc).unwrap();
        let kappa = spec.collective_kappa();
        let c2: f64 = spec.c.iter().map(|c| c * c).sum();
        for v in &vals[..3] {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-10);
        }
        assert_abs_diff_eq!(vals[3], 2.0 * kappa * c2, epsilon = 1e-10);
    }

    #[test]
    fn decay_matrix_invariant_under_global_sign_flip() {
        let mk = |c: Vec<f64>| {
            let spec =
                ChainSpec::new(3, 0.0, 0.0, 2.0, c, 0.0, 0.0, DrivePulse::new(0.0, 1.0).unwrap())
                    .unwrap();
            ideal_decay_matrix(&spec).unwrap()
        };
        let k1 = mk(vec![2.0, -1.0, -1.0]);
        let k2 = mk(vec![-2.0, 1.0, 1.0]);
        for j in 0..3 {
            for m in 0..3 {
                assert_abs_diff_eq!(k1.matrix()[[j, m]], k2.matrix()[[j, m]], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn rejects_decoupled_driven_qubit() {
        assert!(ChainSpec::new(
            2,
            0.0,
            0.0,
            1.0,
            vec![0.0, 1.0],
            0.0,
            0.0,
            DrivePulse::new(0.0, 1.0).unwrap()
        )
        .is_err());
    }

    fn positional_for(c: &[f64], kappa_11: f64, omega_q: f64) -> PositionalChainSpec {
        // Realize relative couplings c_j with signed g_j at positions x_j = j λ₀.
        let n = c.len();
        let kappa = kappa_11 / (2.0 * c[0] * c[0]);
        let g0 = (kappa / (TAU * omega_q)).sqrt();
        let velocity = 100.0; // 1e8 m/s in m/μs
        let spec_tmp = PositionalChainSpec::new(
            n,
            omega_q,
            omega_q,
            velocity,
            vec![0.0; n],
            vec![g0; n],
            0.0,
            0.0,
            DrivePulse::new(0.0, 1.0).unwrap(),
        )
        .unwrap();
        let lambda0 = spec_tmp.lambda0();
        let x: Vec<f64> = (1..=n).map(|j| j as f64 * lambda0).collect();
        // e^{i k x_j} = (−1)^j at x_j = j λ₀, so g_j = c_j (−1)^j g reproduces c.
        let g: Vec<f64> = c
            .iter()
            .enumerate()
            .map(|(idx, &cj)| {
                let j = idx + 1;
                cj * if j % 2 == 0 { 1.0 } else { -1.0 } * g0
            })
            .collect();
        PositionalChainSpec::new(
            n,
            omega_q,
            omega_q,
            velocity,
            x,
            g,
            0.0,
            0.0,
            DrivePulse::new(0.0, 1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn positional_reduces_to_ideal_at_exact_positions() {
        let omega_q = mhz_to_angular(5000.0);
        let kappa_11 = mhz_to_angular(40.0);
        let c = [1.0, -1.0, 1.0];
        let pos = positional_for(&c, kappa_11, omega_q);
        let (lambda, kappa) = positional_couplings(&pos).unwrap();
        assert!(lambda.max_abs() < 1e-12 * kappa_11);

        let ideal = ChainSpec::new(
            3,
            omega_q,
            omega_q,
            kappa_11,
            c.to_vec(),
            0.0,
            0.0,
            DrivePulse::new(0.0, 1.0).unwrap(),
        )
        .unwrap();
        let k_ideal = ideal_decay_matrix(&ideal).unwrap();
        for j in 0..3 {
            for m in 0..3 {
                assert_abs_diff_eq!(
                    kappa.matrix()[[j, m]],
                    k_ideal.matrix()[[j, m]],
                    epsilon = 1e-12 * kappa_11
                );
            }
        }
    }

    #[test]
    fn lambda0_is_one_centimeter_at_5ghz() {
        let spec = PositionalChainSpec::new(
            2,
            mhz_to_angular(5000.0),
            mhz_to_angular(5000.0),
            100.0,
            vec![0.0, 0.01],
            vec![0.01, 0.01],
            0.0,
            0.0,
            DrivePulse::new(0.0, 1.0).unwrap(),
        )
        .unwrap();
        assert_abs_diff_eq!(spec.lambda0(), 0.01, epsilon = 1e-15);
    }

    #[test]
    fn positional_quarter_wave_offset() {
        let omega_q = mhz_to_angular(5000.0);
        let velocity = 100.0;
        let g = [0.02, 0.015];
        let k_wave = omega_q / velocity;
        let lambda0 = std::f64::consts::PI / k_wave;
        let spec = PositionalChainSpec::new(
            2,
            omega_q,
            omega_q,
            velocity,
            vec![0.0, lambda0 + lambda0 / 4.0],
            g.to_vec(),
            0.0,
            0.0,
            DrivePulse::new(0.0, 1.0).unwrap(),
        )
        .unwrap();
        let (lambda, kappa) = positional_couplings(&spec).unwrap();
        let gg = TAU * g[0] * g[1] * omega_q;
        let c45 = (std::f64::consts::FRAC_PI_4).cos();
        assert_abs_diff_eq!(kappa.matrix()[[0, 1]], -2.0 * gg * c45, epsilon = 1e-9 * gg);
        assert_abs_diff_eq!(lambda.matrix()[[0, 1]], -gg * c45, epsilon = 1e-9 * gg);
        // diagonal of the decay matrix is 4π g_j² ω_q
        assert_abs_diff_eq!(
            kappa.matrix()[[0, 0]],
            2.0 * TAU * g[0] * g[0] * omega_q,
            epsilon = 1e-12 * gg
        );
    }

    #[test]
    fn rotating_frame_hamiltonian_matches_drive() {
        let spec = bell_chain(8.0);
        let chain = Chain::Ideal(spec);
        let h = rotating_frame_hamiltonian(&chain, 0.0).unwrap();
        // Resonant drive: H = Ω (σ_1^+ + σ_1^-)
        let hilb = HilbertSpec::qubits(2).unwrap();
        let ket00 = basis_ket(&hilb, &[0, 0]).unwrap();
        let ket10 = basis_ket(&hilb, &[1, 0]).unwrap();
        let h00 = h.matrix().dot(ket00.amplitudes());
        let elem: C64 = ket10.amplitudes().iter().zip(h00.iter()).map(|(a, b)| a.conj() * b).sum();
        assert_abs_diff_eq!(elem.re, TAU * 8.0, epsilon = 1e-12);

        // Past the pulse the drive term vanishes.
        let finite = Chain::Ideal(ChainSpec {
            drive: DrivePulse::new(TAU * 8.0, 0.5).unwrap(),
            ..bell_chain(8.0)
        });
        let h_off = rotating_frame_hamiltonian(&finite, 0.6).unwrap();
        assert!(linalg::max_abs(h_off.matrix()) < 1e-15);
        // Θ(0) = 1: still on exactly at t = t0.
        let h_on = rotating_frame_hamiltonian(&finite, 0.5).unwrap();
        assert!(linalg::max_abs(h_on.matrix()) > 1.0);

        // Hermiticity for a positional chain with nonzero λ.
        let pos = PositionalChainSpec::new(
            2,
            mhz_to_angular(5000.0),
            mhz_to_angular(4999.0),
            100.0,
            vec![0.0, 0.0126],
            vec![0.02, 0.02],
            0.0,
            0.0,
            DrivePulse::new(1.0, f64::INFINITY).unwrap(),
        )
        .unwrap();
        let h_pos = rotating_frame_hamiltonian(&Chain::Positional(pos), 0.0).unwrap();
        assert!(linalg::hermiticity_deviation(h_pos.matrix()) < 1e-14);
    }

    #[test]
    fn collective_jump_annihilates_dark_state() {
        let spec = bell_chain(0.0);
        let j_op = collective_jump_operator(&spec).unwrap();
        let dark = make_bell(Sign::Plus);
        let v = j_op.matrix().dot(dark.amplitudes());
        assert!(v.iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-12);

        // J|B⟩ lands on |00⟩ with |amplitude|² = Σ_j κ_jj.
        let bright = make_bell(Sign::Minus);
        let v = j_op.matrix().dot(bright.amplitudes());
        let norm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        let k = ideal_decay_matrix(&spec).unwrap();
        assert_abs_diff_eq!(norm2, k.diagonal_sum(), epsilon = 1e-9);
        assert_abs_diff_eq!(v[0].norm_sqr(), norm2, epsilon = 1e-12);
    }

    #[test]
    fn w_coupling_vector_examples() {
        assert_eq!(w_coupling_vector(5).unwrap(), vec![4.0, -1.0, -1.0, -1.0, -1.0]);
        assert_eq!(w_coupling_vector(2).unwrap(), vec![1.0, -1.0]);
        assert!(w_coupling_vector(1).is_err());
        // c_1 = −(N−1) c_2
        let c = w_coupling_vector(7).unwrap();
        assert_abs_diff_eq!(c[0], -6.0 * c[1], epsilon = 1e-15);
    }

    #[test]
    fn truncated_basis_dimensions_and_operators() {
        let n = 5;
        let full = ChainOperators::build(n, BasisMode::Full).unwrap();
        assert_eq!(full.dim(), 32);
        assert_eq!(full.phi_index(0), 16);

        let trunc = ChainOperators::build(n, BasisMode::two_excitation()).unwrap();
        assert_eq!(trunc.dim(), 1 + 5 + 10);
        assert_eq!(trunc.ground_index(), 0);

        // σ_j^- |φ_j⟩ = |0...0⟩ in both bases.
        for ops in [&full, &trunc] {
            let phi0 = ops.phi_index(0);
            let sm = ops.sigma_minus(0);
            assert_abs_diff_eq!(sm[[ops.ground_index(), phi0]].re, 1.0, epsilon = 1e-15);
        }

        // In the full basis σ_j^± match the hilbert embeddings.
        let hilb = HilbertSpec::qubits(n).unwrap();
        for j in 0..n {
            let expect = hilbert::site_operator(&hilb, &hilbert::sigma_minus(), j).unwrap();
            let diff = full.sigma_minus(j) - expect.matrix();
            assert!(linalg::max_abs(&diff) < 1e-15);
        }
    }
}
