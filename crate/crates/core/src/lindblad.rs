//! Master-equation right-hand side and density-matrix integration.
//!
//! The generator assembles
//!
//! dρ/dt = −i[H(t), ρ]
//!         + Σ_jm (κ_jm/2)(2 σ_j^− ρ σ_m^+ − σ_m^+σ_j^− ρ − ρ σ_m^+σ_j^−)
//!         + Σ_k rate_k (L_k ρ L_k† − ½{L_k†L_k, ρ})
//!
//! where the channel list carries energy relaxation (L = σ_j^−, rate γ), pure
//! dephasing (L = σ_j^z, rate γφ/2 — identical to the (γφ/2)(σ^zρσ^z − ρ)
//! form), the collective-jump factorization of the cooperative term, and the
//! qutrit dissipators.
//!
//! All anticommutator pieces are folded into one non-Hermitian matrix
//! H_nh = H − iT, so the coherent-plus-anticommutator part of the RHS is a
//! single product: −i(H_nh ρ − ρ H_nh†) = −i(M − M†) with M = H_nh ρ for
//! Hermitian ρ.

use ndarray::{linalg::general_mat_mul, Array1, Array2};

use crate::error::{Error, Result};
use crate::hilbert::{DensityMatrix, HERMITICITY_TOL, POSITIVITY_TOL, TRACE_TOL};
use crate::linalg::{dagger, hermiticity_deviation};
use crate::model::{BasisMode, Chain, ChainOperators, ChainSpec, CouplingMatrix, DecayMatrix};
use crate::C64;

/// Integration method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Embedded adaptive Dormand–Prince 5(4) with PI step control and a
    /// 4th-order continuous extension for sampling.
    Dopri5,
    /// Fixed-step classical Runge–Kutta, cubic-Hermite sampling.
    Rk4 { step: f64 },
}

/// Integrator configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Upper bound on the internal step size (μs).
    pub max_step: f64,
    /// Observable recording cadence (μs).
    pub sample_interval: f64,
    pub method: Method,
    /// Re-Hermitize ρ ← (ρ+ρ†)/2 after every accepted step.
    pub hermitize: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_step: f64::INFINITY,
            sample_interval: 1e-3,
            method: Method::Dopri5,
            hermitize: true,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return Err(Error::invalid("IntegratorConfig: tolerances must be positive"));
        }
        if !(self.max_step > 0.0) {
            return Err(Error::invalid("IntegratorConfig: max_step must be positive"));
        }
        if !(self.sample_interval > 0.0) {
            return Err(Error::invalid("IntegratorConfig: sample_interval must be positive"));
        }
        if let Method::Rk4 { step } = self.method {
            if !(step > 0.0) {
                return Err(Error::invalid("IntegratorConfig: RK4 step must be positive"));
            }
        }
        Ok(())
    }
}

/// Time dependence of the Hamiltonian.
pub enum Hamiltonian {
    Static(Array2<C64>),
    /// Drive on for t ≤ t_switch (Θ(0) = 1), off afterwards.
    PiecewiseConstant { on: Array2<C64>, off: Array2<C64>, t_switch: f64 },
    TimeDependent(Box<dyn Fn(f64) -> Array2<C64> + Send + Sync>),
}

/// A single Lindblad channel rate·(LρL† − ½{L†L, ρ}).
enum Channel {
    General { rate: f64, op: Array2<C64>, op_dag: Array2<C64> },
    /// L real diagonal: fully elementwise action.
    Diagonal { rate: f64, diag: Vec<f64> },
}

/// Cooperative decay Σ_jm (κ_jm/2) D[σ_j^−, σ_m^+] evaluated as the factored
/// double sum.
struct Cooperative {
    kappa: Array2<f64>,
    lowering: Vec<Array2<C64>>,
    raising: Vec<Array2<C64>>,
}

/// Assembled master-equation generator.
pub struct LindbladGenerator {
    dim: usize,
    hamiltonian: Hamiltonian,
    cooperative: Option<Cooperative>,
    channels: Vec<Channel>,
    /// T = Σ_jm (κ_jm/2) σ_m^+σ_j^− + Σ_k (rate_k/2) L_k†L_k.
    anticommutator: Array2<C64>,
}

/// Which representation of the cooperative dissipator to integrate with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CooperativeForm {
    /// Full κ_jm double sum (reference; required for positional chains).
    DecayMatrix,
    /// Single collective jump J = √(2κ) Σ_j c_j σ_j^− (ideal chains only).
    CollectiveJump,
}

impl LindbladGenerator {
    pub fn new(dim: usize, hamiltonian: Hamiltonian) -> Result<Self> {
        let check = |m: &Array2<C64>| -> Result<()> {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(Error::invalid("LindbladGenerator: Hamiltonian dimension mismatch"));
            }
            Ok(())
        };
        match &hamiltonian {
            Hamiltonian::Static(h) => check(h)?,
            Hamiltonian::PiecewiseConstant { on, off, t_switch } => {
                check(on)?;
                check(off)?;
                if !(*t_switch > 0.0) {
                    return Err(Error::invalid("LindbladGenerator: t_switch must be positive"));
                }
            }
            Hamiltonian::TimeDependent(_) => {}
        }
        Ok(Self {
            dim,
            hamiltonian,
            cooperative: None,
            channels: Vec::new(),
            anticommutator: Array2::zeros((dim, dim)),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Attach the cooperative κ_jm dissipator with the given per-site lowering
    /// operators.
    pub fn with_cooperative(
        mut self,
        kappa: &DecayMatrix,
        lowering: Vec<Array2<C64>>,
    ) -> Result<Self> {
        let n = kappa.n();
        if lowering.len() != n {
            return Err(Error::invalid("with_cooperative: one lowering operator per site"));
        }
        for op in &lowering {
            if op.nrows() != self.dim || op.ncols() != self.dim {
                return Err(Error::invalid("with_cooperative: operator dimension mismatch"));
            }
        }
        let raising: Vec<Array2<C64>> = lowering.iter().map(dagger).collect();
        for j in 0..n {
            for m in 0..n {
                let half = 0.5 * kappa.matrix()[[j, m]];
                if half != 0.0 {
                    general_mat_mul(
                        C64::new(half, 0.0),
                        &raising[m],
                        &lowering[j],
                        C64::new(1.0, 0.0),
                        &mut self.anticommutator,
                    );
                }
            }
        }
        self.cooperative = Some(Cooperative { kappa: kappa.matrix().clone(), lowering, raising });
        Ok(self)
    }

    /// Attach a general Lindblad channel rate·(LρL† − ½{L†L, ρ}).
    pub fn with_channel(mut self, rate: f64, op: Array2<C64>) -> Result<Self> {
        if rate < 0.0 {
            return Err(Error::invalid("with_channel: rate must be >= 0"));
        }
        if op.nrows() != self.dim || op.ncols() != self.dim {
            return Err(Error::invalid("with_channel: operator dimension mismatch"));
        }
        if rate == 0.0 {
            return Ok(self);
        }
        let op_dag = dagger(&op);
        general_mat_mul(
            C64::new(0.5 * rate, 0.0),
            &op_dag,
            &op,
            C64::new(1.0, 0.0),
            &mut self.anticommutator,
        );
        self.channels.push(Channel::General { rate, op, op_dag });
        Ok(self)
    }

    /// Attach a channel whose operator is real diagonal (σ_j^z, |j⟩⟨j|, ...).
    pub fn with_diagonal_channel(mut self, rate: f64, diag: Vec<f64>) -> Result<Self> {
        if rate < 0.0 {
            return Err(Error::invalid("with_diagonal_channel: rate must be >= 0"));
        }
        if diag.len() != self.dim {
            return Err(Error::invalid("with_diagonal_channel: diagonal length mismatch"));
        }
        if rate == 0.0 {
            return Ok(self);
        }
        for (i, d) in diag.iter().enumerate() {
            self.anticommutator[[i, i]] += C64::new(0.5 * rate * d * d, 0.0);
        }
        self.channels.push(Channel::Diagonal { rate, diag });
        Ok(self)
    }

    /// Hamiltonian for an integration segment [start, end] (constant unless
    /// the generator is explicitly time-dependent).
    fn segment_hamiltonian(&self, seg_end: f64) -> SegmentHamiltonian<'_> {
        match &self.hamiltonian {
            Hamiltonian::Static(h) => SegmentHamiltonian::Constant(h),
            Hamiltonian::PiecewiseConstant { on, off, t_switch } => {
                if seg_end <= *t_switch {
                    SegmentHamiltonian::Constant(on)
                } else {
                    SegmentHamiltonian::Constant(off)
                }
            }
            Hamiltonian::TimeDependent(f) => SegmentHamiltonian::TimeDependent(f.as_ref()),
        }
    }

    /// Segment boundaries within (0, t_end) where H is discontinuous.
    fn breakpoints(&self, t_end: f64) -> Vec<f64> {
        match &self.hamiltonian {
            Hamiltonian::PiecewiseConstant { t_switch, .. }
                if *t_switch > 0.0 && *t_switch < t_end =>
            {
                vec![*t_switch]
            }
            _ => Vec::new(),
        }
    }

    /// H − iT for a given plain Hamiltonian matrix.
    fn non_hermitian(&self, h: &Array2<C64>) -> Array2<C64> {
        let mut h_nh = h.clone();
        h_nh.scaled_add(C64::new(0.0, -1.0), &self.anticommutator);
        h_nh
    }

    /// dρ/dt for Hermitian ρ, writing into `out`, using workspace `ws`.
    ///
    /// `h_nh` must be H(t) − iT for the current time.
    fn rhs_hermitian_into(
        &self,
        h_nh: &Array2<C64>,
        rho: &Array2<C64>,
        out: &mut Array2<C64>,
        ws: &mut Workspace,
    ) {
        let d = self.dim;
        // M = H_nh ρ;  coherent + anticommutator part = −i(M − M†).
        general_mat_mul(C64::new(1.0, 0.0), h_nh, rho, C64::new(0.0, 0.0), &mut ws.m);
        for a in 0..d {
            for b in 0..d {
                let v = ws.m[[a, b]] - ws.m[[b, a]].conj();
                out[[a, b]] = C64::new(v.im, -v.re); // −i v
            }
        }
        self.add_jump_terms(rho, out, ws);
    }

    /// The jump (sandwich) parts: Σ_jm κ_jm σ_j^−ρσ_m^+ + Σ_k rate_k L_kρL_k†.
    fn add_jump_terms(&self, rho: &Array2<C64>, out: &mut Array2<C64>, ws: &mut Workspace) {
        if let Some(coop) = &self.cooperative {
            let n = coop.lowering.len();
            for m in 0..n {
                general_mat_mul(
                    C64::new(1.0, 0.0),
                    rho,
                    &coop.raising[m],
                    C64::new(0.0, 0.0),
                    &mut ws.x_m[m],
                );
            }
            for j in 0..n {
                ws.y.fill(C64::new(0.0, 0.0));
                let mut any = false;
                for m in 0..n {
                    let k = coop.kappa[[j, m]];
                    if k != 0.0 {
                        ws.y.scaled_add(C64::new(k, 0.0), &ws.x_m[m]);
                        any = true;
                    }
                }
                if any {
                    general_mat_mul(
                        C64::new(1.0, 0.0),
                        &coop.lowering[j],
                        &ws.y,
                        C64::new(1.0, 0.0),
                        out,
                    );
                }
            }
        }
        for chan in &self.channels {
            match chan {
                Channel::General { rate, op, op_dag } => {
                    general_mat_mul(C64::new(1.0, 0.0), op, rho, C64::new(0.0, 0.0), &mut ws.y);
                    general_mat_mul(
                        C64::new(*rate, 0.0),
                        &ws.y,
                        op_dag,
                        C64::new(1.0, 0.0),
                        out,
                    );
                }
                Channel::Diagonal { rate, diag } => {
                    // Sandwich part only: the ½{L†L, ρ} piece lives in H_nh.
                    let d = self.dim;
                    for a in 0..d {
                        for b in 0..d {
                            let w = rate * diag[a] * diag[b];
                            if w != 0.0 {
                                out[[a, b]] += C64::new(w, 0.0) * rho[[a, b]];
                            }
                        }
                    }
                }
            }
        }
    }

    /// Master-equation right-hand side at time `t` for an arbitrary (not
    /// necessarily Hermitian) matrix. This is the exact linear map; the
    /// integrator uses the Hermitian fast path instead.
    pub fn rhs(&self, rho: &Array2<C64>, t: f64) -> Result<Array2<C64>> {
        if rho.nrows() != self.dim || rho.ncols() != self.dim {
            return Err(Error::invalid(format!(
                "rhs: density matrix is {}x{}, generator dimension {}",
                rho.nrows(),
                rho.ncols(),
                self.dim
            )));
        }
        let h = match &self.hamiltonian {
            Hamiltonian::Static(h) => h.clone(),
            Hamiltonian::PiecewiseConstant { on, off, t_switch } => {
                if t <= *t_switch {
                    on.clone()
                } else {
                    off.clone()
                }
            }
            Hamiltonian::TimeDependent(f) => f(t),
        };
        let h_nh = self.non_hermitian(&h);
        let h_nh_dag = dagger(&h_nh);
        let mut out = Array2::<C64>::zeros((self.dim, self.dim));
        // −i(H_nh ρ − ρ H_nh†)
        general_mat_mul(C64::new(0.0, -1.0), &h_nh, rho, C64::new(0.0, 0.0), &mut out);
        general_mat_mul(C64::new(0.0, 1.0), rho, &h_nh_dag, C64::new(1.0, 0.0), &mut out);
        let mut ws = Workspace::new(self.dim, self.coop_sites());
        self.add_jump_terms(rho, &mut out, &mut ws);
        Ok(out)
    }

    fn coop_sites(&self) -> usize {
        self.cooperative.as_ref().map_or(0, |c| c.lowering.len())
    }
}

enum SegmentHamiltonian<'a> {
    Constant(&'a Array2<C64>),
    TimeDependent(&'a (dyn Fn(f64) -> Array2<C64> + Send + Sync)),
}

/// Build the generator for a qubit chain in the frame rotating at the drive
/// frequency.
pub fn chain_generator(
    chain: &Chain,
    ops: &ChainOperators,
    form: CooperativeForm,
) -> Result<LindbladGenerator> {
    let (lambda, kappa) = chain.couplings()?;
    chain_generator_with(chain, ops, form, &lambda, &kappa)
}

/// Like [`chain_generator`] with precomputed coupling matrices.
pub fn chain_generator_with(
    chain: &Chain,
    ops: &ChainOperators,
    form: CooperativeForm,
    lambda: &CouplingMatrix,
    kappa: &DecayMatrix,
) -> Result<LindbladGenerator> {
    let n = chain.n();
    if ops.n() != n {
        return Err(Error::invalid("chain_generator: operator set does not match chain size"));
    }
    let drive = chain.drive();
    let h_on = ops.hamiltonian(chain.detuning(), lambda, drive.rabi);
    let hamiltonian = if drive.duration.is_finite() {
        let h_off = ops.hamiltonian(chain.detuning(), lambda, 0.0);
        Hamiltonian::PiecewiseConstant { on: h_on, off: h_off, t_switch: drive.duration }
    } else {
        Hamiltonian::Static(h_on)
    };

    let mut gen = LindbladGenerator::new(ops.dim(), hamiltonian)?;
    match form {
        CooperativeForm::DecayMatrix => {
            let lowering: Vec<Array2<C64>> = (0..n).map(|j| ops.sigma_minus(j).clone()).collect();
            gen = gen.with_cooperative(kappa, lowering)?;
        }
        CooperativeForm::CollectiveJump => {
            let spec = match chain {
                Chain::Ideal(s) => s,
                Chain::Positional(_) => {
                    return Err(Error::Unsupported(
                        "collective-jump form requires the ideal rank-1 decay matrix".into(),
                    ))
                }
            };
            let j_op = crate::model::collective_jump_matrix(spec, ops);
            gen = gen.with_channel(1.0, j_op)?;
        }
    }

    let gamma = chain.gamma();
    if gamma > 0.0 {
        for j in 0..n {
            gen = gen.with_channel(gamma, ops.sigma_minus(j).clone())?;
        }
    }
    let gamma_phi = chain.gamma_phi();
    if gamma_phi > 0.0 {
        for j in 0..n {
            gen = gen.with_diagonal_channel(gamma_phi / 2.0, ops.sigma_z_diag(j).to_vec())?;
        }
    }
    Ok(gen)
}

/// Convenience: generator for an ideal chain in the full basis, collective
/// jump form.
pub fn ideal_chain_generator(spec: &ChainSpec) -> Result<(LindbladGenerator, ChainOperators)> {
    let ops = ChainOperators::build(spec.n, BasisMode::Full)?;
    let gen = chain_generator(&Chain::Ideal(spec.clone()), &ops, CooperativeForm::CollectiveJump)?;
    Ok((gen, ops))
}

// ---------------------------------------------------------------------------
// Observables and trajectories
// ---------------------------------------------------------------------------

/// What to record along a trajectory.
pub struct ObservableSet {
    /// Pure-state targets (vectors in the active basis) for fidelity traces.
    pub targets: Vec<Array1<C64>>,
    /// Basis indices whose diagonal occupation is recorded, in output order.
    pub population_indices: Vec<usize>,
}

impl ObservableSet {
    /// Chain default: ground population plus ⟨φ_j|ρ|φ_j⟩ for every site.
    pub fn for_chain(ops: &ChainOperators, targets: Vec<Array1<C64>>) -> Self {
        let mut population_indices = Vec::with_capacity(ops.n() + 1);
        population_indices.push(ops.ground_index());
        for j in 0..ops.n() {
            population_indices.push(ops.phi_index(j));
        }
        Self { targets, population_indices }
    }
}

/// Time-ordered record of fidelity and population observables from one
/// integration run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// One fidelity trace per target.
    pub fidelities: Vec<Vec<f64>>,
    /// One population trace per recorded basis index.
    pub populations: Vec<Vec<f64>>,
    pub final_rho: DensityMatrix,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Fidelity trace of the primary (first) target.
    pub fn primary_fidelity(&self) -> &[f64] {
        &self.fidelities[0]
    }

    /// Fidelity of the primary target at the final time.
    pub fn final_fidelity(&self) -> f64 {
        *self.fidelities[0].last().expect("trajectory is nonempty")
    }
}

// ---------------------------------------------------------------------------
// Integration
// ---------------------------------------------------------------------------

struct Workspace {
    m: Array2<C64>,
    y: Array2<C64>,
    x_m: Vec<Array2<C64>>,
}

impl Workspace {
    fn new(dim: usize, coop_sites: usize) -> Self {
        Self {
            m: Array2::zeros((dim, dim)),
            y: Array2::zeros((dim, dim)),
            x_m: (0..coop_sites).map(|_| Array2::zeros((dim, dim))).collect(),
        }
    }
}

// Dormand–Prince 5(4) tableau.
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
const C: [f64; 6] = [0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
// Continuous-extension coefficients.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn lincomb_into(out: &mut Array2<C64>, base: &Array2<C64>, terms: &[(f64, &Array2<C64>)]) {
    out.assign(base);
    for (w, k) in terms {
        out.scaled_add(C64::new(*w, 0.0), k);
    }
}

/// Weighted RMS error norm of `err` against scale atol + rtol·max(|y0|,|y1|).
fn error_norm(err: &Array2<C64>, y0: &Array2<C64>, y1: &Array2<C64>, cfg: &IntegratorConfig) -> f64 {
    let n = err.len() as f64;
    let mut acc = 0.0;
    for ((e, a), b) in err.iter().zip(y0.iter()).zip(y1.iter()) {
        let sc = cfg.abs_tol + cfg.rel_tol * a.norm().max(b.norm());
        let q = e.norm() / sc;
        acc += q * q;
    }
    (acc / n).sqrt()
}

struct Recorder<'a> {
    observables: &'a ObservableSet,
    sample_interval: f64,
    t_end: f64,
    next_index: usize,
    times: Vec<f64>,
    fidelities: Vec<Vec<f64>>,
    populations: Vec<Vec<f64>>,
}

impl<'a> Recorder<'a> {
    fn new(observables: &'a ObservableSet, cfg: &IntegratorConfig, t_end: f64) -> Self {
        Self {
            observables,
            sample_interval: cfg.sample_interval,
            t_end,
            next_index: 0,
            times: Vec::new(),
            fidelities: vec![Vec::new(); observables.targets.len()],
            populations: vec![Vec::new(); observables.population_indices.len()],
        }
    }

    /// Next pending sample time, or None past t_end.
    fn next_time(&self) -> Option<f64> {
        let t = self.next_index as f64 * self.sample_interval;
        if t < self.t_end - 1e-12 * self.t_end.max(1.0) {
            Some(t)
        } else if self.times.last().map_or(true, |&last| last < self.t_end) {
            Some(self.t_end)
        } else {
            None
        }
    }

    fn record(&mut self, t: f64, rho: &Array2<C64>) -> Result<()> {
        validate_sample(t, rho)?;
        self.times.push(t);
        for (trace, target) in self.fidelities.iter_mut().zip(&self.observables.targets) {
            trace.push(quadratic_form(rho, target));
        }
        for (trace, &idx) in self.populations.iter_mut().zip(&self.observables.population_indices)
        {
            trace.push(rho[[idx, idx]].re);
        }
        self.next_index += 1;
        Ok(())
    }
}

fn quadratic_form(rho: &Array2<C64>, psi: &Array1<C64>) -> f64 {
    let d = psi.len();
    let mut val = C64::new(0.0, 0.0);
    for i in 0..d {
        let ai = psi[i].conj();
        if ai.norm_sqr() == 0.0 {
            continue;
        }
        for j in 0..d {
            val += ai * rho[[i, j]] * psi[j];
        }
    }
    val.re.clamp(0.0, 1.0)
}

/// Trace / Hermiticity / diagonal-positivity checks for a recorded sample.
/// Violations beyond 10x the density-matrix tolerances abort the run.
fn validate_sample(t: f64, rho: &Array2<C64>) -> Result<()> {
    let tr: C64 = rho.diag().sum();
    if (tr.re - 1.0).abs() > 10.0 * TRACE_TOL || tr.im.abs() > 10.0 * TRACE_TOL {
        return Err(Error::NumericalInstability {
            time: t,
            message: format!("trace drifted to {tr}"),
        });
    }
    let herm = hermiticity_deviation(rho);
    if herm > 10.0 * HERMITICITY_TOL {
        return Err(Error::NumericalInstability {
            time: t,
            message: format!("Hermiticity deviation {herm:.3e}"),
        });
    }
    for i in 0..rho.nrows() {
        if rho[[i, i]].re < -10.0 * POSITIVITY_TOL {
            return Err(Error::NumericalInstability {
                time: t,
                message: format!("negative population {:.3e} at basis index {i}", rho[[i, i]].re),
            });
        }
    }
    Ok(())
}

/// Integrate the master equation from a valid initial density matrix,
/// recording observables at the configured cadence.
pub fn evolve(
    gen: &LindbladGenerator,
    rho0: &DensityMatrix,
    t_end: f64,
    cfg: &IntegratorConfig,
    observables: &ObservableSet,
) -> Result<Trajectory> {
    cfg.validate()?;
    if rho0.dim() != gen.dim() {
        return Err(Error::invalid("evolve: initial state dimension mismatch"));
    }
    if !(t_end > 0.0) {
        return Err(Error::invalid("evolve: t_end must be positive"));
    }
    for target in &observables.targets {
        if target.len() != gen.dim() {
            return Err(Error::invalid("evolve: target dimension mismatch"));
        }
    }
    for &idx in &observables.population_indices {
        if idx >= gen.dim() {
            return Err(Error::invalid("evolve: population index out of range"));
        }
    }

    let mut recorder = Recorder::new(observables, cfg, t_end);
    let mut rho = rho0.matrix().clone();
    recorder.record(0.0, &rho)?;

    let mut boundaries = gen.breakpoints(t_end);
    boundaries.push(t_end);
    let mut seg_start = 0.0;
    for seg_end in boundaries {
        match cfg.method {
            Method::Dopri5 => {
                integrate_segment_dopri5(gen, &mut rho, seg_start, seg_end, cfg, &mut recorder)?
            }
            Method::Rk4 { step } => {
                integrate_segment_rk4(gen, &mut rho, seg_start, seg_end, step, cfg, &mut recorder)?
            }
        }
        seg_start = seg_end;
    }

    let final_rho = DensityMatrix::new(rho)?;
    Ok(Trajectory {
        times: recorder.times,
        fidelities: recorder.fidelities,
        populations: recorder.populations,
        final_rho,
    })
}

fn hermitize(rho: &mut Array2<C64>) {
    let d = rho.nrows();
    for a in 0..d {
        for b in (a + 1)..d {
            let avg = 0.5 * (rho[[a, b]] + rho[[b, a]].conj());
            rho[[a, b]] = avg;
            rho[[b, a]] = avg.conj();
        }
        rho[[a, a]] = C64::new(rho[[a, a]].re, 0.0);
    }
}

#[allow(clippy::too_many_arguments)]
fn integrate_segment_dopri5(
    gen: &LindbladGenerator,
    rho: &mut Array2<C64>,
    seg_start: f64,
    seg_end: f64,
    cfg: &IntegratorConfig,
    recorder: &mut Recorder<'_>,
) -> Result<()> {
    let dim = gen.dim();
    let seg_h = gen.segment_hamiltonian(seg_end);
    let mut ws = Workspace::new(dim, gen.coop_sites());

    // Pre-assemble H_nh for constant segments; time-dependent generators
    // rebuild it at every stage time.
    let h_nh_const: Option<Array2<C64>> = match &seg_h {
        SegmentHamiltonian::Constant(h) => Some(gen.non_hermitian(h)),
        SegmentHamiltonian::TimeDependent(_) => None,
    };
    let eval = |t: f64, y: &Array2<C64>, out: &mut Array2<C64>, ws: &mut Workspace| {
        match (&h_nh_const, &seg_h) {
            (Some(h_nh), _) => gen.rhs_hermitian_into(h_nh, y, out, ws),
            (None, SegmentHamiltonian::TimeDependent(f)) => {
                let h_nh = gen.non_hermitian(&f(t));
                gen.rhs_hermitian_into(&h_nh, y, out, ws);
            }
            (None, SegmentHamiltonian::Constant(_)) => unreachable!(),
        }
    };

    let mut k: Vec<Array2<C64>> = (0..7).map(|_| Array2::zeros((dim, dim))).collect();
    let mut y_tmp = Array2::<C64>::zeros((dim, dim));
    let mut y_new = Array2::<C64>::zeros((dim, dim));
    let mut err = Array2::<C64>::zeros((dim, dim));

    let mut t = seg_start;
    let seg_len = seg_end - seg_start;
    if seg_len <= 0.0 {
        return Ok(());
    }

    eval(t, rho, &mut k[0], &mut ws);

    // Initial step size (standard two-derivative heuristic).
    let mut h = {
        let norm = |m: &Array2<C64>, scale_of: &Array2<C64>| -> f64 {
            let n = m.len() as f64;
            let mut acc = 0.0;
            for (v, y) in m.iter().zip(scale_of.iter()) {
                let sc = cfg.abs_tol + cfg.rel_tol * y.norm();
                let q = v.norm() / sc;
                acc += q * q;
            }
            (acc / n).sqrt()
        };
        let d0 = norm(rho, rho);
        let d1 = norm(&k[0], rho);
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0 = h0.min(seg_len).min(cfg.max_step);
        lincomb_into(&mut y_tmp, rho, &[(h0, &k[0])]);
        eval(t + h0, &y_tmp, &mut k[1], &mut ws);
        err.assign(&k[1]);
        err.scaled_add(C64::new(-1.0, 0.0), &k[0]);
        let d2 = norm(&err, rho) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(seg_len).min(cfg.max_step)
    };

    let mut err_old: f64 = 1e-4;
    let mut rejected = false;
    let mut first_stage_fresh = true; // k[0] holds f(t, rho)

    while t < seg_end {
        h = h.min(seg_end - t).min(cfg.max_step);
        if h < 1e-14 * (t.abs() + 1.0) {
            return Err(Error::IntegrationFailure {
                time: t,
                message: "step size underflow (stiffness or discontinuity)".into(),
            });
        }
        if !first_stage_fresh {
            eval(t, rho, &mut k[0], &mut ws);
            first_stage_fresh = true;
        }

        lincomb_into(&mut y_tmp, rho, &[(h * A2[0], &k[0])]);
        eval(t + C[0] * h, &y_tmp, &mut k[1], &mut ws);

        lincomb_into(&mut y_tmp, rho, &[(h * A3[0], &k[0]), (h * A3[1], &k[1])]);
        eval(t + C[1] * h, &y_tmp, &mut k[2], &mut ws);

        lincomb_into(
            &mut y_tmp,
            rho,
            &[(h * A4[0], &k[0]), (h * A4[1], &k[1]), (h * A4[2], &k[2])],
        );
        eval(t + C[2] * h, &y_tmp, &mut k[3], &mut ws);

        lincomb_into(
            &mut y_tmp,
            rho,
            &[
                (h * A5[0], &k[0]),
                (h * A5[1], &k[1]),
                (h * A5[2], &k[2]),
                (h * A5[3], &k[3]),
            ],
        );
        eval(t + C[3] * h, &y_tmp, &mut k[4], &mut ws);

        lincomb_into(
            &mut y_tmp,
            rho,
            &[
                (h * A6[0], &k[0]),
                (h * A6[1], &k[1]),
                (h * A6[2], &k[2]),
                (h * A6[3], &k[3]),
                (h * A6[4], &k[4]),
            ],
        );
        eval(t + C[4] * h, &y_tmp, &mut k[5], &mut ws);

        // 5th-order solution (B row), also the last stage position.
        lincomb_into(
            &mut y_new,
            rho,
            &[
                (h * B[0], &k[0]),
                (h * B[2], &k[2]),
                (h * B[3], &k[3]),
                (h * B[4], &k[4]),
                (h * B[5], &k[5]),
            ],
        );
        let t_new = t + h;
        eval(t_new, &y_new, &mut k[6], &mut ws);

        err.fill(C64::new(0.0, 0.0));
        for (w, ki) in E.iter().zip(k.iter()) {
            if *w != 0.0 {
                err.scaled_add(C64::new(h * *w, 0.0), ki);
            }
        }
        let err_norm = error_norm(&err, rho, &y_new, cfg).max(1e-16);

        if err_norm <= 1.0 {
            // Dense output over (t, t_new].
            while let Some(ts) = recorder.next_time() {
                if ts <= t {
                    // Segment boundaries can coincide with a sample.
                    recorder.record(ts, rho)?;
                    continue;
                }
                if ts > t_new + 1e-14 * t_new.abs().max(1.0) {
                    break;
                }
                if (ts - t_new).abs() <= 1e-14 * t_new.abs().max(1.0) {
                    recorder.record(ts, &y_new)?;
                } else {
                    let theta = (ts - t) / h;
                    let rho_s = dense_output(rho, &y_new, &k, h, theta);
                    recorder.record(ts, &rho_s)?;
                }
            }

            rho.assign(&y_new);
            if cfg.hermitize {
                hermitize(rho);
            }
            k.swap(0, 6); // FSAL
            first_stage_fresh = !cfg.hermitize;
            t = t_new;

            let fac11 = err_norm.powf(0.17);
            let mut fac = fac11 / err_old.powf(0.04);
            fac = fac.max(1.0 / 5.0).min(1.0 / 0.2) / 0.9;
            let mut h_new = h / fac;
            if rejected {
                h_new = h_new.min(h);
            }
            err_old = err_norm.max(1e-4);
            rejected = false;
            h = h_new;
        } else {
            rejected = true;
            let fac11 = err_norm.powf(0.17);
            h /= (fac11 / 0.9).min(1.0 / 0.2);
        }
    }
    Ok(())
}

/// Dormand–Prince 4th-order continuous extension on [t, t+h].
fn dense_output(
    y0: &Array2<C64>,
    y1: &Array2<C64>,
    k: &[Array2<C64>],
    h: f64,
    theta: f64,
) -> Array2<C64> {
    let theta1 = 1.0 - theta;
    let dim = y0.nrows();
    let mut out = Array2::<C64>::zeros((dim, dim));
    for ((idx, o), (v0, v1)) in out.indexed_iter_mut().zip(y0.iter().zip(y1.iter())) {
        let (a, b) = idx;
        let k1 = k[0][[a, b]];
        let k3 = k[2][[a, b]];
        let k4 = k[3][[a, b]];
        let k5 = k[4][[a, b]];
        let k6 = k[5][[a, b]];
        let k7 = k[6][[a, b]];
        let ydiff = *v1 - *v0;
        let bspl = h * k1 - ydiff;
        let rcont4 = ydiff - h * k7 - bspl;
        let rcont5 = h * (D1 * k1 + D3 * k3 + D4 * k4 + D5 * k5 + D6 * k6 + D7 * k7);
        *o = *v0 + theta * (ydiff + theta1 * (bspl + theta * (rcont4 + theta1 * rcont5)));
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn integrate_segment_rk4(
    gen: &LindbladGenerator,
    rho: &mut Array2<C64>,
    seg_start: f64,
    seg_end: f64,
    step: f64,
    cfg: &IntegratorConfig,
    recorder: &mut Recorder<'_>,
) -> Result<()> {
    let dim = gen.dim();
    let seg_h = gen.segment_hamiltonian(seg_end);
    let mut ws = Workspace::new(dim, gen.coop_sites());
    let h_nh_const: Option<Array2<C64>> = match &seg_h {
        SegmentHamiltonian::Constant(h) => Some(gen.non_hermitian(h)),
        SegmentHamiltonian::TimeDependent(_) => None,
    };
    let eval = |t: f64, y: &Array2<C64>, out: &mut Array2<C64>, ws: &mut Workspace| {
        match (&h_nh_const, &seg_h) {
            (Some(h_nh), _) => gen.rhs_hermitian_into(h_nh, y, out, ws),
            (None, SegmentHamiltonian::TimeDependent(f)) => {
                let h_nh = gen.non_hermitian(&f(t));
                gen.rhs_hermitian_into(&h_nh, y, out, ws);
            }
            (None, SegmentHamiltonian::Constant(_)) => unreachable!(),
        }
    };

    let seg_len = seg_end - seg_start;
    if seg_len <= 0.0 {
        return Ok(());
    }
    let step = step.min(cfg.max_step);
    let n_steps = (seg_len / step).ceil().max(1.0) as usize;
    let h = seg_len / n_steps as f64;

    let mut k1 = Array2::<C64>::zeros((dim, dim));
    let mut k2 = Array2::<C64>::zeros((dim, dim));
    let mut k3 = Array2::<C64>::zeros((dim, dim));
    let mut k4 = Array2::<C64>::zeros((dim, dim));
    let mut y_tmp = Array2::<C64>::zeros((dim, dim));
    let mut y_new = Array2::<C64>::zeros((dim, dim));

    for i in 0..n_steps {
        let t = seg_start + i as f64 * h;
        let t_new = if i + 1 == n_steps { seg_end } else { t + h };
        eval(t, rho, &mut k1, &mut ws);
        lincomb_into(&mut y_tmp, rho, &[(0.5 * h, &k1)]);
        eval(t + 0.5 * h, &y_tmp, &mut k2, &mut ws);
        lincomb_into(&mut y_tmp, rho, &[(0.5 * h, &k2)]);
        eval(t + 0.5 * h, &y_tmp, &mut k3, &mut ws);
        lincomb_into(&mut y_tmp, rho, &[(h, &k3)]);
        eval(t + h, &y_tmp, &mut k4, &mut ws);
        lincomb_into(
            &mut y_new,
            rho,
            &[
                (h / 6.0, &k1),
                (h / 3.0, &k2),
                (h / 3.0, &k3),
                (h / 6.0, &k4),
            ],
        );
        eval(t_new, &y_new, &mut k4, &mut ws); // endpoint slope for Hermite

        while let Some(ts) = recorder.next_time() {
            if ts <= t {
                recorder.record(ts, rho)?;
                continue;
            }
            if ts > t_new + 1e-14 * t_new.abs().max(1.0) {
                break;
            }
            if (ts - t_new).abs() <= 1e-14 * t_new.abs().max(1.0) {
                recorder.record(ts, &y_new)?;
            } else {
                // Cubic Hermite on (t, rho, k1) — (t_new, y_new, k4).
                let theta = (ts - t) / h;
                let h00 = (1.0 + 2.0 * theta) * (1.0 - theta) * (1.0 - theta);
                let h10 = theta * (1.0 - theta) * (1.0 - theta);
                let h01 = theta * theta * (3.0 - 2.0 * theta);
                let h11 = theta * theta * (theta - 1.0);
                let mut rho_s = Array2::<C64>::zeros((dim, dim));
                lincomb_into(
                    &mut rho_s,
                    &(rho.mapv(|z| z * h00)),
                    &[(h * h10, &k1), (h * h11, &k4)],
                );
                rho_s.scaled_add(C64::new(h01, 0.0), &y_new);
                recorder.record(ts, &rho_s)?;
            }
        }

        rho.assign(&y_new);
        if cfg.hermitize {
            hermitize(rho);
        }
    }
    Ok(())
}

/// Dense superoperator matrix L with vec(dρ/dt) = L·vec(ρ), column-major vec.
///
/// Only supported for total dimension ≤ 16 (the N ≤ 4 validation oracle).
pub fn superoperator_matrix(gen: &LindbladGenerator, t: f64) -> Result<Array2<C64>> {
    let d = gen.dim();
    if d > 16 {
        return Err(Error::Unsupported(format!(
            "superoperator_matrix: dimension {d} > 16"
        )));
    }
    let mut sup = Array2::<C64>::zeros((d * d, d * d));
    let mut unit = Array2::<C64>::zeros((d, d));
    for b in 0..d {
        for a in 0..d {
            unit[[a, b]] = C64::new(1.0, 0.0);
            let col = gen.rhs(&unit, t)?;
            unit[[a, b]] = C64::new(0.0, 0.0);
            let col_index = a + d * b;
            for bb in 0..d {
                for aa in 0..d {
                    sup[[aa + d * bb, col_index]] = col[[aa, bb]];
                }
            }
        }
    }
    Ok(sup)
}
