//! Single-excitation analysis: the effective non-Hermitian Hamiltonian, its
//! dark/bright eigenmodes, the orthonormal dark basis, and the W-state
//! coupling condition.
//!
//! In the single-excitation sector the effective Hamiltonian is
//! H_eff = ω_q·I − (i/2)K with K the cooperative decay matrix, so its
//! eigenproblem reduces exactly to the real-symmetric eigenproblem of K:
//! eigenvalue μ of K ↔ E = ω_q − iμ/2. The N−1 zero modes of the rank-1 ideal
//! K are the dark states; the range of K is the bright state ∝ (c_1, ..., c_N).

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::linalg;
use crate::C64;

/// Effective non-Hermitian Hamiltonian on span{|φ_1⟩, ..., |φ_N⟩}.
#[derive(Debug, Clone)]
pub struct EffectiveHamiltonian {
    h: Array2<C64>,
}

impl EffectiveHamiltonian {
    /// Wrap a complex-symmetric matrix with the Eq.-(5) structure
    /// (diagonal ω_q − iκ_jj/2, off-diagonal −iκ_jm/2).
    pub fn new(h: Array2<C64>) -> Result<Self> {
        let n = h.nrows();
        if h.ncols() != n || n < 2 {
            return Err(Error::invalid("EffectiveHamiltonian: need a square matrix with N >= 2"));
        }
        let scale = linalg::max_abs(&h).max(f64::MIN_POSITIVE);
        for j in 0..n {
            for m in 0..n {
                if (h[[j, m]] - h[[m, j]]).norm() > 1e-12 * scale {
                    return Err(Error::invalid("EffectiveHamiltonian: must be complex-symmetric"));
                }
                if j != m && h[[j, m]].re.abs() > 1e-12 * scale {
                    return Err(Error::invalid(
                        "EffectiveHamiltonian: off-diagonal entries must be purely −iκ_jm/2",
                    ));
                }
            }
        }
        let omega = h[[0, 0]].re;
        for j in 1..n {
            if (h[[j, j]].re - omega).abs() > 1e-9 * scale.max(omega.abs()) {
                return Err(Error::invalid(
                    "EffectiveHamiltonian: diagonal real parts must all equal ω_q",
                ));
            }
        }
        Ok(Self { h })
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.h
    }

    pub fn n(&self) -> usize {
        self.h.nrows()
    }

    /// ω_q (common real diagonal).
    pub fn omega_q(&self) -> f64 {
        self.h[[0, 0]].re
    }

    /// Recover the decay matrix K = −2·Im(H).
    pub fn decay_matrix(&self) -> Array2<f64> {
        self.h.mapv(|z| -2.0 * z.im)
    }

    /// κ_11 entry, used as the dark/bright classification scale.
    pub fn kappa_11(&self) -> f64 {
        -2.0 * self.h[[0, 0]].im
    }
}

/// Dark/bright classification of an eigenmode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeKind {
    Dark,
    Bright,
}

/// A single-excitation eigenvector with its complex eigenvalue.
#[derive(Debug, Clone)]
pub struct EigenMode {
    pub vector: Array1<C64>,
    pub eigenvalue: C64,
    pub kind: ModeKind,
}

/// Result of [`eigenmodes`]: all N modes plus an advisory for decoupled sites.
#[derive(Debug, Clone)]
pub struct EigenModes {
    pub modes: Vec<EigenMode>,
    /// Set when some c_j = 0 (κ_jj = 0): the mode structure is still computed
    /// but a decoupled qubit never appears in the paper's protocols.
    pub warning: Option<String>,
}

impl EigenModes {
    pub fn dark(&self) -> impl Iterator<Item = &EigenMode> {
        self.modes.iter().filter(|m| m.kind == ModeKind::Dark)
    }

    pub fn bright(&self) -> impl Iterator<Item = &EigenMode> {
        self.modes.iter().filter(|m| m.kind == ModeKind::Bright)
    }
}

/// Effective Hamiltonian with κ_jm = 2 c_j c_m κ.
pub fn build_h_eff(c: &[f64], kappa: f64, omega_q: f64) -> Result<EffectiveHamiltonian> {
    let n = c.len();
    if n < 2 {
        return Err(Error::invalid("build_h_eff: N must be >= 2"));
    }
    let mut h = Array2::<C64>::zeros((n, n));
    for j in 0..n {
        for m in 0..n {
            let kappa_jm = 2.0 * c[j] * c[m] * kappa;
            h[[j, m]] = C64::new(if j == m { omega_q } else { 0.0 }, -0.5 * kappa_jm);
        }
    }
    EffectiveHamiltonian::new(h)
}

/// All N eigenmodes of the effective Hamiltonian, dark modes first.
///
/// Exactly N−1 modes are dark (Im E = 0) and one is bright
/// (Im E = −Σ_j κ_jj/2) whenever no c_j vanishes.
pub fn eigenmodes(h: &EffectiveHamiltonian) -> Result<EigenModes> {
    let n = h.n();
    let omega = h.omega_q();
    let k = h.decay_matrix();
    let kc = k.mapv(|v| C64::new(v, 0.0));
    let (mu, vecs) = linalg::eigh(&kc)?;

    let kappa_11 = h.kappa_11();
    let threshold = 1e-9 * kappa_11;
    let mut modes = Vec::with_capacity(n);
    for (idx, &m) in mu.iter().enumerate() {
        let mut vector: Array1<C64> = vecs.column(idx).to_owned();
        // Fix the phase: first component of nonnegligible modulus is made
        // positive real (the vectors are real up to a global phase).
        if let Some(lead) = vector.iter().find(|z| z.norm() > 1e-12) {
            let phase = lead / lead.norm();
            vector.mapv_inplace(|z| z / phase);
        }
        let eigenvalue = C64::new(omega, -0.5 * m);
        let kind = if eigenvalue.im.abs() < threshold { ModeKind::Dark } else { ModeKind::Bright };
        modes.push(EigenMode { vector, eigenvalue, kind });
    }
    // Ascending K-eigenvalue puts the dark (zero) modes first and the
    // superradiant mode last; make that ordering explicit.
    modes.sort_by(|a, b| b.eigenvalue.im.total_cmp(&a.eigenvalue.im));

    let decoupled: Vec<usize> = (0..n).filter(|&j| k[[j, j]] == 0.0).collect();
    let warning = if decoupled.is_empty() {
        None
    } else {
        Some(format!(
            "site(s) {:?} have κ_jj = 0 (decoupled from the waveguide); dark/bright \
             classification uses the κ_11 scale",
            decoupled.iter().map(|j| j + 1).collect::<Vec<_>>()
        ))
    };
    Ok(EigenModes { modes, warning })
}

/// Orthonormal basis of the single-excitation sector: N−1 dark vectors from
/// modified Gram–Schmidt over the paper-form eigenvectors
/// v_n = c_{n+1}|φ_1⟩ − c_1|φ_{n+1}⟩ (in that order), plus the bright vector
/// c/‖c‖.
#[derive(Debug, Clone)]
pub struct DarkBasis {
    pub vectors: Vec<Array1<C64>>,
    pub bright: Array1<C64>,
}

pub fn orthonormal_dark_basis(modes: &EigenModes, c: &[f64]) -> Result<DarkBasis> {
    let n = c.len();
    let dark_count = modes.dark().count();
    if dark_count != n - 1 {
        return Err(Error::DegenerateInput(format!(
            "expected {} dark modes, found {dark_count}",
            n - 1
        )));
    }
    let norm_c = c.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm_c == 0.0 {
        return Err(Error::DegenerateInput("coupling vector is zero".into()));
    }

    let mut basis: Vec<Array1<C64>> = Vec::with_capacity(n - 1);
    let mut degenerate: Vec<usize> = Vec::new();
    for m in 1..n {
        // Paper-form dark vector: c_{m+1}|φ_1⟩ − c_1|φ_{m+1}⟩ (1-based).
        let mut v = Array1::<C64>::zeros(n);
        v[0] = C64::new(c[m], 0.0);
        v[m] = C64::new(-c[0], 0.0);
        let pre_norm = (c[m] * c[m] + c[0] * c[0]).sqrt();
        for b in &basis {
            let overlap: C64 = b.iter().zip(v.iter()).map(|(x, y)| x.conj() * y).sum();
            for (vi, bi) in v.iter_mut().zip(b.iter()) {
                *vi -= overlap * bi;
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm <= 1e-12 * pre_norm.max(norm_c) {
            degenerate.push(m + 1);
            continue;
        }
        v.mapv_inplace(|z| z / norm);
        if let Some(lead) = v.iter().find(|z| z.norm() > 1e-12) {
            let phase = lead / lead.norm();
            v.mapv_inplace(|z| z / phase);
        }
        basis.push(v);
    }
    if !degenerate.is_empty() || basis.len() != n - 1 {
        return Err(Error::DegenerateInput(format!(
            "Gram–Schmidt rank deficiency at paper-form vectors for sites {degenerate:?}"
        )));
    }

    let bright = Array1::from_iter(c.iter().map(|&x| C64::new(x / norm_c, 0.0)));
    Ok(DarkBasis { vectors: basis, bright })
}

/// Decompose |φ_1⟩ = Σ_j f_j |φ_j⟩ + p_b |B⟩: returns (f, p_b) with
/// f_1 = 1 − c_1²/Σc², f_j = −c_1 c_j/Σc² (j ≥ 2), p_b = c_1/√(Σc²).
pub fn decompose_phi1(c: &[f64]) -> Result<(Vec<f64>, f64)> {
    let s: f64 = c.iter().map(|x| x * x).sum();
    if s == 0.0 {
        return Err(Error::invalid("decompose_phi1: coupling vector is zero"));
    }
    let mut f = Vec::with_capacity(c.len());
    f.push(1.0 - c[0] * c[0] / s);
    for &cj in &c[1..] {
        f.push(-c[0] * cj / s);
    }
    Ok((f, c[0] / s.sqrt()))
}

/// True iff the dark component of |φ_1⟩ is the W state: max_j |f_j − 1/N| < tol.
pub fn verify_w_condition(c: &[f64], tol: f64) -> Result<bool> {
    let n = c.len() as f64;
    let (f, _) = decompose_phi1(c)?;
    Ok(f.iter().all(|fj| (fj - 1.0 / n).abs() < tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{mhz_to_angular, w_coupling_vector};
    use approx::assert_abs_diff_eq;

    const TAU: f64 = std::f64::consts::TAU;

    #[test]
    fn h_eff_matches_two_qubit_closed_form() {
        let kappa11 = mhz_to_angular(40.0);
        let kappa = kappa11 / 2.0; // c_1 = 1
        let omega = mhz_to_angular(5000.0);
        let h = build_h_eff(&[1.0, -1.0], kappa, omega).unwrap();
        // H = [[ω − iκ11/2, +iκ11/2], [+iκ11/2, ω − iκ11/2]]
        assert_abs_diff_eq!(h.matrix()[[0, 0]].re, omega, epsilon = 1e-9);
        assert_abs_diff_eq!(h.matrix()[[0, 0]].im, -kappa11 / 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(h.matrix()[[0, 1]].im, kappa11 / 2.0, epsilon = 1e-9);

        // Eigenvalues {ω, ω − iκ11}.
        let modes = eigenmodes(&h).unwrap();
        assert_eq!(modes.dark().count(), 1);
        assert_eq!(modes.bright().count(), 1);
        let dark = modes.dark().next().unwrap();
        let bright = modes.bright().next().unwrap();
        assert_abs_diff_eq!(dark.eigenvalue.re, omega, epsilon = 1e-9);
        assert_abs_diff_eq!(dark.eigenvalue.im, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(bright.eigenvalue.im, -kappa11, epsilon = 1e-6);

        // Dark mode ∝ (1, 1)/√2, bright ∝ (1, −1)/√2.
        let inv = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(dark.vector[0].re, inv, epsilon = 1e-10);
        assert_abs_diff_eq!(dark.vector[1].re, inv, epsilon = 1e-10);
        assert_abs_diff_eq!(bright.vector[0].re, inv, epsilon = 1e-10);
        assert_abs_diff_eq!(bright.vector[1].re, -inv, epsilon = 1e-10);
    }

    #[test]
    fn trace_imaginary_part_is_total_decay() {
        let c = [0.7, -1.3, 2.1];
        let kappa = 1.9;
        let h = build_h_eff(&c, kappa, 10.0).unwrap();
        let im_trace: f64 = (0..3).map(|j| h.matrix()[[j, j]].im).sum();
        let expect: f64 = c.iter().map(|cj| -cj * cj * kappa).sum();
        assert_abs_diff_eq!(im_trace, expect, epsilon = 1e-12);
    }

    #[test]
    fn three_qubit_bright_rate() {
        // c = (2, −1, −1), κ_22 = κ_11/4: Im E_bright = −(κ_11 + 2κ_22)/2.
        let kappa11 = TAU * 90.0;
        let kappa = kappa11 / 8.0; // κ_11 = 2 c_1² κ = 8κ
        let h = build_h_eff(&[2.0, -1.0, -1.0], kappa, 0.0).unwrap();
        let modes = eigenmodes(&h).unwrap();
        assert_eq!(modes.dark().count(), 2);
        let bright = modes.bright().next().unwrap();
        let kappa22 = kappa11 / 4.0;
        assert_abs_diff_eq!(
            bright.eigenvalue.im,
            -(kappa11 + 2.0 * kappa22) / 2.0,
            epsilon = 1e-9 * kappa11
        );
    }

    #[test]
    fn paper_form_vectors_are_eigenvectors() {
        let c = [1.7, -0.4, 0.9, -2.2, 0.3];
        let kappa = 0.8;
        let omega = 3.0;
        let h = build_h_eff(&c, kappa, omega).unwrap();
        let n = c.len();
        let scale = linalg::max_abs(h.matrix());
        for m in 1..n {
            let mut v = Array1::<C64>::zeros(n);
            v[0] = C64::new(c[m], 0.0);
            v[m] = C64::new(-c[0], 0.0);
            let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            v.mapv_inplace(|z| z / norm);
            let hv = h.matrix().dot(&v);
            let mut resid = 0.0_f64;
            for i in 0..n {
                resid = resid.max((hv[i] - C64::new(omega, 0.0) * v[i]).norm());
            }
            assert!(resid < 1e-10 * scale, "paper-form vector {m} residual {resid:.2e}");
        }
        // The bright paper-form vector Σ c_j|φ_j⟩ has eigenvalue ω − iΣκ_jj/2.
        let norm_c = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        let v = Array1::from_iter(c.iter().map(|&x| C64::new(x / norm_c, 0.0)));
        let hv = h.matrix().dot(&v);
        let total: f64 = c.iter().map(|cj| 2.0 * cj * cj * kappa).sum();
        let expect = C64::new(omega, -0.5 * total);
        for i in 0..n {
            assert!((hv[i] - expect * v[i]).norm() < 1e-10 * scale);
        }
    }

    #[test]
    fn dark_basis_orthonormal_and_orthogonal_to_bright() {
        let c = [2.0, -1.0, -1.0];
        let kappa11 = TAU * 90.0;
        let h = build_h_eff(&c, kappa11 / 8.0, 0.0).unwrap();
        let modes = eigenmodes(&h).unwrap();
        let basis = orthonormal_dark_basis(&modes, &c).unwrap();
        assert_eq!(basis.vectors.len(), 2);
        for (i, v) in basis.vectors.iter().enumerate() {
            for (j, w) in basis.vectors.iter().enumerate() {
                let overlap: C64 = v.iter().zip(w.iter()).map(|(a, b)| a.conj() * b).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(overlap.re, expect, epsilon = 1e-12);
                assert_abs_diff_eq!(overlap.im, 0.0, epsilon = 1e-12);
            }
            let to_bright: C64 = v.iter().zip(basis.bright.iter()).map(|(a, b)| a.conj() * b).sum();
            assert!(to_bright.norm() < 1e-12);
        }
        // N=2: the single dark vector is the paper-form vector up to the
        // fixed phase (first component positive real).
        let c2 = [1.0, -1.0];
        let h2 = build_h_eff(&c2, 1.0, 0.0).unwrap();
        let modes2 = eigenmodes(&h2).unwrap();
        let basis2 = orthonormal_dark_basis(&modes2, &c2).unwrap();
        let inv = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(basis2.vectors[0][0].re, inv, epsilon = 1e-12);
        assert_abs_diff_eq!(basis2.vectors[0][1].re, inv, epsilon = 1e-12);
    }

    #[test]
    fn dark_basis_rejects_degenerate_c1() {
        // c_1 = 0 makes every paper-form vector parallel to |φ_1⟩.
        let c = [0.0, 1.0, 1.0];
        let mut h = Array2::<C64>::zeros((3, 3));
        for j in 0..3 {
            for m in 0..3 {
                h[[j, m]] = C64::new(0.0, -c[j] * c[m]);
            }
        }
        let h = EffectiveHamiltonian::new(h).unwrap();
        let modes = eigenmodes(&h).unwrap();
        assert!(modes.warning.is_some());
        assert!(matches!(
            orthonormal_dark_basis(&modes, &c),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn decompose_phi1_examples() {
        // N=2, c=(1,−1): f = (1/2, 1/2), p_b = 1/√2.
        let (f, pb) = decompose_phi1(&[1.0, -1.0]).unwrap();
        assert_abs_diff_eq!(f[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(f[1], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(pb, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);

        // N=5 W configuration: all f_j = 1/5, p_b = 4/√20.
        let (f, pb) = decompose_phi1(&[4.0, -1.0, -1.0, -1.0, -1.0]).unwrap();
        for fj in &f {
            assert_abs_diff_eq!(*fj, 0.2, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(pb, 4.0 / 20.0_f64.sqrt(), epsilon = 1e-15);

        // N=3, c=(1,1,1): f = (2/3, −1/3, −1/3) — not a W state.
        let (f, _) = decompose_phi1(&[1.0, 1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(f[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(f[1], -1.0 / 3.0, epsilon = 1e-15);

        // The reconstruction |φ_1⟩ = Σ f_j|φ_j⟩ + p_b|B⟩ holds.
        let c = [1.7, -0.4, 0.9, -2.2];
        let (f, pb) = decompose_phi1(&c).unwrap();
        let norm_c = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        for j in 0..c.len() {
            let expect = if j == 0 { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(f[j] + pb * c[j] / norm_c, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn w_condition_examples() {
        let c7 = w_coupling_vector(7).unwrap();
        assert!(verify_w_condition(&c7, 1e-12).unwrap());
        assert!(!verify_w_condition(&[1.0, 1.0, 1.0], 1e-3).unwrap());
        // Scale invariance.
        let scaled: Vec<f64> = c7.iter().map(|x| x * -3.7).collect();
        assert!(verify_w_condition(&scaled, 1e-12).unwrap());
        // Σ f_j² + p_b² = 1 when the W condition holds.
        let (f, pb) = decompose_phi1(&c7).unwrap();
        let total: f64 = f.iter().map(|x| x * x).sum::<f64>() + pb * pb;
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn decompose_scale_invariance() {
        let c = [1.3, -0.2, 0.8];
        let (f1, p1) = decompose_phi1(&c).unwrap();
        let scaled: Vec<f64> = c.iter().map(|x| x * 5.0).collect();
        let (f2, p2) = decompose_phi1(&scaled).unwrap();
        for (a, b) in f1.iter().zip(f2.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(p1, p2, epsilon = 1e-14);
    }
}
