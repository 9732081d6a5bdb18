//! Small dense linear-algebra helpers: adjoints, norms, and a cyclic-Jacobi
//! eigensolver for complex Hermitian matrices.
//!
//! Everything in this crate works on matrices of dimension ≤ 256 (N ≤ 8
//! qubits), where the quadratically convergent Jacobi iteration is more than
//! fast enough and fully deterministic.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::C64;

/// Conjugate transpose.
pub fn dagger(a: &Array2<C64>) -> Array2<C64> {
    a.t().mapv(|z| z.conj())
}

/// Largest elementwise modulus.
pub fn max_abs(a: &Array2<C64>) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest elementwise deviation from Hermiticity, max |A - A†|.
pub fn hermiticity_deviation(a: &Array2<C64>) -> f64 {
    let n = a.nrows();
    let mut dev = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((a[[i, j]] - a[[j, i]].conj()).norm());
        }
    }
    dev
}

/// Trace of a square complex matrix.
pub fn trace(a: &Array2<C64>) -> C64 {
    a.diag().sum()
}

/// Eigendecomposition of a complex Hermitian matrix by cyclic Jacobi
/// rotations.
///
/// Returns eigenvalues in ascending order and the matrix whose columns are
/// the corresponding orthonormal eigenvectors. The input is assumed Hermitian;
/// only its Hermitian part is consulted.
pub fn eigh(a: &Array2<C64>) -> Result<(Vec<f64>, Array2<C64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::invalid(format!(
            "eigh: matrix must be square, got {}x{}",
            n,
            a.ncols()
        )));
    }
    // Work on the explicitly Hermitized copy so roundoff in the input cannot
    // break the rotation formulas.
    let mut m = Array2::<C64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            m[[i, j]] = 0.5 * (a[[i, j]] + a[[j, i]].conj());
        }
    }
    let mut v = Array2::<C64>::eye(n);
    let scale = max_abs(&m).max(f64::MIN_POSITIVE);
    let tol = 1e-15 * scale;

    let off = |m: &Array2<C64>| -> f64 {
        let mut s = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                s += m[[p, q]].norm_sqr();
            }
        }
        s.sqrt()
    };

    let max_sweeps = 64;
    for sweep in 0.. {
        if off(&m) <= tol * (n as f64) {
            break;
        }
        if sweep >= max_sweeps {
            return Err(Error::NumericalFailure(format!(
                "eigh: Jacobi iteration did not converge in {max_sweeps} sweeps (off-norm {:.3e})",
                off(&m)
            )));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.norm() <= tol {
                    continue;
                }
                let app = m[[p, p]].re;
                let aqq = m[[q, q]].re;
                let abs_apq = apq.norm();
                let phase = apq / abs_apq;
                // tan(theta) from cot(2 theta) = (app - aqq) / (2 |apq|)
                let tau = (app - aqq) / (2.0 * abs_apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                // Rotate rows/columns p and q: R = [[c, -s u], [s conj(u), c]]
                // with u = phase, applied as m <- R† m R, v <- v R.
                for r in 0..n {
                    let mrp = m[[r, p]];
                    let mrq = m[[r, q]];
                    m[[r, p]] = c * mrp + s * phase.conj() * mrq;
                    m[[r, q]] = -s * phase * mrp + c * mrq;
                }
                for r in 0..n {
                    let mpr = m[[p, r]];
                    let mqr = m[[q, r]];
                    m[[p, r]] = c * mpr + s * phase * mqr;
                    m[[q, r]] = -s * phase.conj() * mpr + c * mqr;
                }
                // Clean the rotated pair to keep the matrix exactly Hermitian.
                m[[p, q]] = 0.5 * (m[[p, q]] + m[[q, p]].conj());
                m[[q, p]] = m[[p, q]].conj();
                m[[p, p]] = C64::new(m[[p, p]].re, 0.0);
                m[[q, q]] = C64::new(m[[q, q]].re, 0.0);

                for r in 0..n {
                    let vrp = v[[r, p]];
                    let vrq = v[[r, q]];
                    v[[r, p]] = c * vrp + s * phase.conj() * vrq;
                    v[[r, q]] = -s * phase * vrp + c * vrq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let evals: Vec<f64> = (0..n).map(|i| m[[i, i]].re).collect();
    order.sort_by(|&i, &j| evals[i].total_cmp(&evals[j]));
    let sorted_vals: Vec<f64> = order.iter().map(|&i| evals[i]).collect();
    let mut sorted_vecs = Array2::<C64>::zeros((n, n));
    for (col, &i) in order.iter().enumerate() {
        for r in 0..n {
            sorted_vecs[[r, col]] = v[[r, i]];
        }
    }
    Ok((sorted_vals, sorted_vecs))
}

/// Smallest eigenvalue of a complex Hermitian matrix.
pub fn min_eigenvalue(a: &Array2<C64>) -> Result<f64> {
    let (vals, _) = eigh(a)?;
    Ok(vals[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn eigh_diagonal_is_identity_decomposition() {
        let a = array![
            [C64::new(3.0, 0.0), C64::new(0.0, 0.0)],
            [C64::new(0.0, 0.0), C64::new(-1.0, 0.0)]
        ];
        let (vals, vecs) = eigh(&a).unwrap();
        assert_abs_diff_eq!(vals[0], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(vals[1], 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(vecs[[1, 0]].norm(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn eigh_2x2_complex_closed_form() {
        // [[1, i], [-i, 1]] has eigenvalues 0 and 2.
        let a = array![
            [C64::new(1.0, 0.0), C64::new(0.0, 1.0)],
            [C64::new(0.0, -1.0), C64::new(1.0, 0.0)]
        ];
        let (vals, vecs) = eigh(&a).unwrap();
        assert_abs_diff_eq!(vals[0], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(vals[1], 2.0, epsilon = 1e-14);
        // residual check A v = lambda v
        for k in 0..2 {
            for r in 0..2 {
                let av: C64 = (0..2).map(|c| a[[r, c]] * vecs[[c, k]]).sum();
                assert_abs_diff_eq!((av - vals[k] * vecs[[r, k]]).norm(), 0.0, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn eigh_rank_one_outer_product() {
        // K = 2 kappa c c^T has eigenvalues (2 kappa |c|^2, 0, ..., 0).
        let c = [2.0, -1.0, -1.0, 0.5];
        let kappa = 3.7;
        let n = c.len();
        let mut k = Array2::<C64>::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                k[[i, j]] = C64::new(2.0 * kappa * c[i] * c[j], 0.0);
            }
        }
        let (vals, _) = eigh(&k).unwrap();
        let norm2: f64 = c.iter().map(|x| x * x).sum();
        for v in &vals[..n - 1] {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(vals[n - 1], 2.0 * kappa * norm2, epsilon = 1e-12);
    }

    #[test]
    fn eigh_orthonormal_columns() {
        // Deterministic pseudo-random Hermitian matrix.
        let n = 12;
        let mut a = Array2::<C64>::zeros((n, n));
        let mut state = 1u64;
        let mut rng = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64) / (u32::MAX as f64) - 0.5
        };
        for i in 0..n {
            for j in 0..n {
                a[[i, j]] = C64::new(rng(), rng());
            }
        }
        let h = &a + &dagger(&a);
        let (_, v) = eigh(&h).unwrap();
        let gram = dagger(&v).dot(&v);
        for i in 0..n {
            for j in 0..n {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(gram[[i, j]].re, expect, epsilon = 1e-12);
                assert_abs_diff_eq!(gram[[i, j]].im, 0.0, epsilon = 1e-12);
            }
        }
    }
}
