//! Singular values via cyclic Jacobi sweeps on the Gram matrix.
//!
//! The feature matrices measured here have at most a few hundred columns, so
//! a Gram-matrix eigensolve is accurate enough and keeps the kernel tiny.
//! Convergence is declared when the off-diagonal Frobenius mass drops below
//! `1e-12` relative to the Gram matrix norm; square roots are clamped at 0.

use crate::error::{Error, Result};
use crate::numkit::Matrix;

const OFF_DIAG_TOL: f64 = 1e-12;
const DEFAULT_SWEEP_BUDGET: usize = 64;

/// Singular values of `a`, descending, `min(rows, cols)` of them.
pub fn singular_values(a: &Matrix) -> Result<Vec<f64>> {
    singular_values_with_budget(a, DEFAULT_SWEEP_BUDGET)
}

/// As [`singular_values`], with an explicit Jacobi sweep budget. Reports an
/// error instead of returning a half-converged spectrum.
pub fn singular_values_with_budget(a: &Matrix, budget: usize) -> Result<Vec<f64>> {
    if a.rows() == 0 || a.cols() == 0 {
        return Err(Error::invalid("singular_values", "empty matrix"));
    }
    // Work on the smaller Gram matrix: A^T A or A A^T.
    let gram = if a.rows() >= a.cols() {
        a.matmul_tn(a)?
    } else {
        a.matmul_nt(a)?
    };
    let mut eig = jacobi_eigenvalues(gram, budget)?;
    eig.sort_by(|x, y| y.partial_cmp(x).unwrap());
    Ok(eig.into_iter().map(|v| v.max(0.0).sqrt()).collect())
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
fn jacobi_eigenvalues(mut g: Matrix, budget: usize) -> Result<Vec<f64>> {
    let n = g.rows();
    let scale = g.frobenius_norm_sq().sqrt();
    if scale == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let tol = OFF_DIAG_TOL * scale;

    for _ in 0..budget {
        if off_diagonal_norm(&g) <= tol {
            return Ok((0..n).map(|i| g.get(i, i)).collect());
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let gpq = g.get(p, q);
                if gpq.abs() <= tol / (n as f64) {
                    continue;
                }
                let (c, s) = rotation(g.get(p, p), g.get(q, q), gpq);
                apply_rotation(&mut g, p, q, c, s);
            }
        }
    }

    let off = off_diagonal_norm(&g);
    if off <= tol {
        Ok((0..n).map(|i| g.get(i, i)).collect())
    } else {
        Err(Error::NoConvergence {
            op: "singular_values",
            budget,
            off,
        })
    }
}

fn off_diagonal_norm(g: &Matrix) -> f64 {
    let n = g.rows();
    let mut s = 0.0;
    for p in 0..n {
        for q in 0..n {
            if p != q {
                s += g.get(p, q) * g.get(p, q);
            }
        }
    }
    s.sqrt()
}

/// Stable Jacobi rotation annihilating the (p, q) entry.
fn rotation(gpp: f64, gqq: f64, gpq: f64) -> (f64, f64) {
    let theta = (gqq - gpp) / (2.0 * gpq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    (c, t * c)
}

fn apply_rotation(g: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let n = g.rows();
    for k in 0..n {
        let gkp = g.get(k, p);
        let gkq = g.get(k, q);
        g.set(k, p, c * gkp - s * gkq);
        g.set(k, q, s * gkp + c * gkq);
    }
    for k in 0..n {
        let gpk = g.get(p, k);
        let gqk = g.get(q, k);
        g.set(p, k, c * gpk - s * gqk);
        g.set(q, k, s * gpk + c * gqk);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Rng;

    fn random_matrix(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.normal())
    }

    #[test]
    fn identity_has_unit_singular_values() {
        let sv = singular_values(&Matrix::identity(3)).unwrap();
        for v in sv {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_matrix_recovers_absolute_diagonal() {
        let sv = singular_values(&Matrix::from_diag(&[3.0, 0.0])).unwrap();
        assert!((sv[0] - 3.0).abs() < 1e-12);
        assert!(sv[1].abs() < 1e-12);
    }

    #[test]
    fn zero_matrix_yields_zero_spectrum() {
        let sv = singular_values(&Matrix::zeros(4, 2)).unwrap();
        assert_eq!(sv, vec![0.0, 0.0]);
    }

    #[test]
    fn zero_sweep_budget_reports_non_convergence() {
        let mut rng = Rng::new(1);
        let a = random_matrix(&mut rng, 4, 4);
        assert!(matches!(
            singular_values_with_budget(&a, 0),
            Err(Error::NoConvergence { .. })
        ));
    }

    // ---- independent eigenvalue oracle -------------------------------
    //
    // Eigenvalues of the Gram matrix by bracketing the roots of its
    // characteristic polynomial: the number of eigenvalues below `lambda`
    // equals the count of negative pivots in the symmetric elimination of
    // G - lambda*I (Sylvester inertia), which lets us bisect each root
    // without any rotation machinery.

    fn eigs_below(g: &Matrix, lambda: f64) -> usize {
        let n = g.rows();
        let mut m = g.clone();
        for i in 0..n {
            m.set(i, i, m.get(i, i) - lambda);
        }
        let mut negatives = 0;
        for k in 0..n {
            let mut pivot = m.get(k, k);
            if pivot == 0.0 {
                pivot = 1e-300;
            }
            if pivot < 0.0 {
                negatives += 1;
            }
            for i in (k + 1)..n {
                let f = m.get(i, k) / pivot;
                for j in k..n {
                    m.set(i, j, m.get(i, j) - f * m.get(k, j));
                }
            }
        }
        negatives
    }

    fn oracle_gram_eigenvalues(g: &Matrix) -> Vec<f64> {
        let n = g.rows();
        // Gershgorin upper bound.
        let mut hi: f64 = 0.0;
        for i in 0..n {
            let r: f64 = (0..n).map(|j| g.get(i, j).abs()).sum();
            hi = hi.max(r);
        }
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            let (mut lo, mut up) = (-1.0, hi + 1.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + up);
                if eigs_below(g, mid) > k {
                    up = mid;
                } else {
                    lo = mid;
                }
            }
            out.push(0.5 * (lo + up));
        }
        out.sort_by(|a, b| b.partial_cmp(a).unwrap());
        out
    }

    #[test]
    fn random_6x4_matches_characteristic_polynomial_oracle() {
        let mut rng = Rng::new(77);
        let a = random_matrix(&mut rng, 6, 4);
        let sv = singular_values(&a).unwrap();
        let gram = a.matmul_tn(&a).unwrap();
        let oracle: Vec<f64> = oracle_gram_eigenvalues(&gram)
            .into_iter()
            .map(|v| v.max(0.0).sqrt())
            .collect();
        assert_eq!(sv.len(), 4);
        for (x, y) in sv.iter().zip(&oracle) {
            assert!((x - y).abs() / y.abs().max(1.0) < 1e-8, "{x} vs {y}");
        }
    }

    #[test]
    fn oracle_agrees_for_small_square_matrices_too() {
        for (seed, n) in [(3u64, 2usize), (4, 3), (5, 4)] {
            let mut rng = Rng::new(seed);
            let a = random_matrix(&mut rng, n, n);
            let sv = singular_values(&a).unwrap();
            let gram = a.matmul_tn(&a).unwrap();
            let oracle: Vec<f64> = oracle_gram_eigenvalues(&gram)
                .into_iter()
                .map(|v| v.max(0.0).sqrt())
                .collect();
            for (x, y) in sv.iter().zip(&oracle) {
                assert!((x - y).abs() / y.abs().max(1.0) < 1e-8);
            }
        }
    }

    #[test]
    fn row_permutation_leaves_singular_values_unchanged() {
        let mut rng = Rng::new(13);
        let a = random_matrix(&mut rng, 5, 3);
        let perm = rng.permutation(5);
        let b = Matrix::from_fn(5, 3, |r, c| a.get(perm[r], c));
        let sa = singular_values(&a).unwrap();
        let sb = singular_values(&b).unwrap();
        for (x, y) in sa.iter().zip(&sb) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn frobenius_mass_equals_sum_of_squared_singular_values() {
        for n in [2usize, 5, 9, 16] {
            let mut rng = Rng::new(n as u64);
            let a = random_matrix(&mut rng, n, n.max(3) - 1);
            let sv = singular_values(&a).unwrap();
            let mass: f64 = sv.iter().map(|v| v * v).sum();
            let fro = a.frobenius_norm_sq();
            assert!((mass - fro).abs() / fro.max(1.0) < 1e-8);
        }
    }
}
