//! A single driven three-level transmon: bounds the leakage into the second
//! excited state that the two-level chain model neglects.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::hilbert::DensityMatrix;
use crate::lindblad::{evolve, Hamiltonian, IntegratorConfig, LindbladGenerator, ObservableSet};
use crate::C64;

/// Dissipation rates of the qutrit (rad/μs): γ_{j1 j2} multiplies the Lindblad
/// channel with operator |j1⟩⟨j2|.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QutritRates {
    pub gamma_01: f64,
    pub gamma_12: f64,
    pub gamma_02: f64,
    pub gamma_00: f64,
    pub gamma_11: f64,
    pub gamma_22: f64,
}

/// Driven transmon qutrit parameters (rad/μs).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QutritSpec {
    pub omega_10: f64,
    pub omega_21: f64,
    pub omega_d: f64,
    pub rabi: f64,
    pub rates: QutritRates,
}

impl QutritSpec {
    pub fn new(
        omega_10: f64,
        omega_21: f64,
        omega_d: f64,
        rabi: f64,
        rates: QutritRates,
    ) -> Result<Self> {
        if !(omega_10 > omega_21) {
            return Err(Error::invalid(
                "QutritSpec: positive anharmonicity required (omega_10 > omega_21)",
            ));
        }
        if rabi < 0.0 {
            return Err(Error::invalid("QutritSpec: rabi must be >= 0"));
        }
        for (name, r) in [
            ("gamma_01", rates.gamma_01),
            ("gamma_12", rates.gamma_12),
            ("gamma_02", rates.gamma_02),
            ("gamma_00", rates.gamma_00),
            ("gamma_11", rates.gamma_11),
            ("gamma_22", rates.gamma_22),
        ] {
            if r < 0.0 || r.is_nan() {
                return Err(Error::invalid(format!("QutritSpec: {name} must be >= 0")));
            }
        }
        Ok(Self { omega_10, omega_21, omega_d, rabi, rates })
    }

    /// Anharmonicity η = ω_10 − ω_21.
    pub fn anharmonicity(&self) -> f64 {
        self.omega_10 - self.omega_21
    }
}

/// Level populations over time.
#[derive(Debug, Clone)]
pub struct QutritTrajectory {
    pub times: Vec<f64>,
    pub p0: Vec<f64>,
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
}

/// |j1⟩⟨j2| on the qutrit.
fn level_op(j1: usize, j2: usize) -> Array2<C64> {
    let mut m = Array2::<C64>::zeros((3, 3));
    m[[j1, j2]] = C64::new(1.0, 0.0);
    m
}

/// Assemble the qutrit master-equation generator in the frame rotating at the
/// drive frequency: H = (ω_10 − ω_d)|1⟩⟨1| + (ω_10 + ω_21 − 2ω_d)|2⟩⟨2|
/// + Ω(|1⟩⟨0| + |2⟩⟨1| + h.c.), with the six dissipation channels.
pub fn qutrit_generator(spec: &QutritSpec) -> Result<LindbladGenerator> {
    let mut h = Array2::<C64>::zeros((3, 3));
    h[[1, 1]] = C64::new(spec.omega_10 - spec.omega_d, 0.0);
    h[[2, 2]] = C64::new(spec.omega_10 + spec.omega_21 - 2.0 * spec.omega_d, 0.0);
    let rabi = C64::new(spec.rabi, 0.0);
    h[[1, 0]] = rabi;
    h[[0, 1]] = rabi;
    h[[2, 1]] = rabi;
    h[[1, 2]] = rabi;

    let r = &spec.rates;
    LindbladGenerator::new(3, Hamiltonian::Static(h))?
        .with_channel(r.gamma_01, level_op(0, 1))?
        .with_channel(r.gamma_12, level_op(1, 2))?
        .with_channel(r.gamma_02, level_op(0, 2))?
        .with_diagonal_channel(r.gamma_00, vec![1.0, 0.0, 0.0])?
        .with_diagonal_channel(r.gamma_11, vec![0.0, 1.0, 0.0])?
        .with_diagonal_channel(r.gamma_22, vec![0.0, 0.0, 1.0])
}

/// Evolve the qutrit from |0⟩⟨0| and record the level populations.
pub fn run_leakage(
    spec: &QutritSpec,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<QutritTrajectory> {
    if !(t_end > 0.0) {
        return Err(Error::invalid("run_leakage: t_end must be positive"));
    }
    let gen = qutrit_generator(spec)?;
    let rho0 = DensityMatrix::basis_state(3, 0)?;
    let observables = ObservableSet { targets: vec![], population_indices: vec![0, 1, 2] };
    let traj = evolve(&gen, &rho0, t_end, cfg, &observables)?;
    let p0 = traj.populations[0].clone();
    let p1 = traj.populations[1].clone();
    let p2 = traj.populations[2].clone();
    for ((a, b), c) in p0.iter().zip(p1.iter()).zip(p2.iter()) {
        let total = a + b + c;
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::NumericalInstability {
                time: 0.0,
                message: format!("qutrit populations sum to {total}"),
            });
        }
    }
    Ok(QutritTrajectory { times: traj.times, p0, p1, p2 })
}

/// Largest recorded occupation of the second excited state.
pub fn max_leakage(traj: &QutritTrajectory) -> f64 {
    traj.p2.iter().cloned().fold(0.0, f64::max)
}

/// Fig.-9 parameter set: ω_10/2π = ω_d/2π = 5 GHz, ω_21/2π = 4.76 GHz,
/// Ω_d/2π = 1 MHz, γ_01⁻¹ = γ_12⁻¹ = 60 μs, γ_02⁻¹ = 150 μs,
/// γ_11⁻¹ = γ_22⁻¹ = 25 μs, γ_00 = 3γ_11.
pub fn paper_qutrit_spec() -> QutritSpec {
    let mhz = crate::model::mhz_to_angular;
    let gamma_11 = 1.0 / 25.0;
    QutritSpec::new(
        mhz(5000.0),
        mhz(4760.0),
        mhz(5000.0),
        mhz(1.0),
        QutritRates {
            gamma_01: 1.0 / 60.0,
            gamma_12: 1.0 / 60.0,
            gamma_02: 1.0 / 150.0,
            gamma_00: 3.0 * gamma_11,
            gamma_11,
            gamma_22: gamma_11,
        },
    )
    .expect("paper parameters are valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::mhz_to_angular;
    use approx::assert_abs_diff_eq;

    #[test]
    fn resonant_drive_detuning_structure() {
        let spec = paper_qutrit_spec();
        // |2⟩ detuning in the rotating frame is −η with η/2π = 240 MHz.
        assert_abs_diff_eq!(spec.anharmonicity(), mhz_to_angular(240.0), epsilon = 1e-9);
        let gen = qutrit_generator(&spec).unwrap();
        let rho = DensityMatrix::basis_state(3, 0).unwrap();
        // trace(rhs) = 0.
        let out = gen.rhs(rho.matrix(), 0.0).unwrap();
        let tr: C64 = out.diag().sum();
        assert!(tr.norm() < 1e-14);
    }

    #[test]
    fn undriven_ground_state_is_stationary() {
        let mut spec = paper_qutrit_spec();
        spec.rabi = 0.0;
        let gen = qutrit_generator(&spec).unwrap();
        let rho = DensityMatrix::basis_state(3, 0).unwrap();
        let out = gen.rhs(rho.matrix(), 0.0).unwrap();
        assert!(crate::linalg::max_abs(&out) < 1e-14);

        let cfg = IntegratorConfig { sample_interval: 0.1, ..Default::default() };
        let traj = run_leakage(&spec, 2.0, &cfg).unwrap();
        assert!(max_leakage(&traj) < 1e-12);
        assert_abs_diff_eq!(traj.p0[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(*traj.p0.last().unwrap(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn qutrit_rejects_negative_anharmonicity() {
        let r = paper_qutrit_spec().rates;
        assert!(QutritSpec::new(1.0, 2.0, 1.0, 0.1, r).is_err());
    }

    #[test]
    fn reduces_to_two_level_model() {
        // Disable everything touching |2⟩ and the |2⟩⟨1| part of the drive:
        // populations must match a two-level simulation.
        let mhz = mhz_to_angular;
        let gamma_01 = 1.0 / 60.0;
        let gamma_00 = 3.0 / 25.0;
        let gamma_11 = 1.0 / 25.0;
        let rabi = mhz(1.0);

        let mut h3 = Array2::<C64>::zeros((3, 3));
        h3[[1, 0]] = C64::new(rabi, 0.0);
        h3[[0, 1]] = C64::new(rabi, 0.0);
        h3[[2, 2]] = C64::new(mhz(-240.0), 0.0);
        let gen3 = LindbladGenerator::new(3, Hamiltonian::Static(h3))
            .unwrap()
            .with_channel(gamma_01, level_op(0, 1))
            .unwrap()
            .with_diagonal_channel(gamma_00, vec![1.0, 0.0, 0.0])
            .unwrap()
            .with_diagonal_channel(gamma_11, vec![0.0, 1.0, 0.0])
            .unwrap();

        let mut h2 = Array2::<C64>::zeros((2, 2));
        h2[[1, 0]] = C64::new(rabi, 0.0);
        h2[[0, 1]] = C64::new(rabi, 0.0);
        let gen2 = LindbladGenerator::new(2, Hamiltonian::Static(h2))
            .unwrap()
            .with_channel(gamma_01, crate::hilbert::sigma_minus())
            .unwrap()
            .with_diagonal_channel(gamma_00, vec![1.0, 0.0])
            .unwrap()
            .with_diagonal_channel(gamma_11, vec![0.0, 1.0])
            .unwrap();

        let cfg = IntegratorConfig {
            rel_tol: 1e-11,
            abs_tol: 1e-13,
            sample_interval: 0.05,
            ..Default::default()
        };
        let obs3 = ObservableSet { targets: vec![], population_indices: vec![0, 1] };
        let obs2 = ObservableSet { targets: vec![], population_indices: vec![0, 1] };
        let t3 = evolve(&gen3, &DensityMatrix::basis_state(3, 0).unwrap(), 5.0, &cfg, &obs3)
            .unwrap();
        let t2 = evolve(&gen2, &DensityMatrix::basis_state(2, 0).unwrap(), 5.0, &cfg, &obs2)
            .unwrap();
        for k in 0..t3.times.len() {
            assert_abs_diff_eq!(t3.populations[0][k], t2.populations[0][k], epsilon = 1e-9);
            assert_abs_diff_eq!(t3.populations[1][k], t2.populations[1][k], epsilon = 1e-9);
        }
    }
}
