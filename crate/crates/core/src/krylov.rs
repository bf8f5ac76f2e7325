//! Restarted GMRES with right preconditioning.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmresOptions {
    /// Stop when ‖b − Ax‖ ≤ rel_tol · (‖b‖ + ‖A‖·‖x‖), the normwise backward
    /// error. With ‖A‖ unknown (passed as 0) this is ‖b − Ax‖ ≤ rel_tol · ‖b‖.
    pub rel_tol: f64,
    pub restart: usize,
    pub max_iter: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            restart: 60,
            max_iter: 3000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GmresReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A x = b` starting from `x`. `apply(v, out)` writes A·v and
/// `precond(v, out)` writes M⁻¹·v; the Krylov space is built for A M⁻¹.
/// `a_norm` is an estimate of ‖A‖ (0 if unknown). The reported residual is
/// the backward error ‖b − Ax‖ / (‖b‖ + ‖A‖·‖x‖).
///
/// The backward error is the right yardstick for discretized differential
/// operators: ‖A‖ grows like h⁻², and for smooth b the computed ‖b − Ax‖
/// cannot drop below roughly ε‖A‖‖x‖, which may exceed rel_tol·‖b‖.
pub fn gmres(
    apply: impl Fn(&[f64], &mut [f64]),
    precond: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    a_norm: f64,
    opts: &GmresOptions,
) -> Result<GmresReport> {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(GmresReport {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let m = opts.restart.max(1);
    let mut work = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut history = Vec::new();
    let mut total = 0;

    loop {
        apply(x, &mut work);
        r.iter_mut().zip(b).zip(&work).for_each(|((r, b), ax)| *r = b - ax);
        let beta = norm(&r);
        let denom = bnorm + a_norm * norm(x);
        let rel = beta / denom;
        history.push(rel);
        if rel <= opts.rel_tol {
            return Ok(GmresReport {
                iterations: total,
                relative_residual: rel,
            });
        }
        if total >= opts.max_iter || !rel.is_finite() {
            return Err(Error::NonConvergence {
                solver: "gmres",
                iterations: total,
                last_residual: rel,
                history,
            });
        }

        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        let mut hess = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k = 0;
        while k < m && total < opts.max_iter {
            precond(&basis[k], &mut z);
            apply(&z, &mut work);
            // Modified Gram–Schmidt.
            for (i, v) in basis.iter().enumerate() {
                let hik = dot(&work, v);
                hess[i][k] = hik;
                work.iter_mut().zip(v).for_each(|(w, v)| *w -= hik * v);
            }
            let hnext = norm(&work);
            hess[k + 1][k] = hnext;
            for i in 0..k {
                let t = cs[i] * hess[i][k] + sn[i] * hess[i + 1][k];
                hess[i + 1][k] = -sn[i] * hess[i][k] + cs[i] * hess[i + 1][k];
                hess[i][k] = t;
            }
            let denom = hess[k][k].hypot(hess[k + 1][k]);
            (cs[k], sn[k]) = if denom == 0.0 {
                (1.0, 0.0)
            } else {
                (hess[k][k] / denom, hess[k + 1][k] / denom)
            };
            hess[k][k] = denom;
            hess[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            total += 1;
            k += 1;
            if hnext == 0.0 || g[k].abs() / denom <= opts.rel_tol {
                break;
            }
            basis.push(work.iter().map(|w| w / hnext).collect());
        }

        // Back substitution for the k-dimensional least-squares solution.
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let s: f64 = (i + 1..k).map(|j| hess[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / hess[i][i];
        }
        work.iter_mut().for_each(|w| *w = 0.0);
        for (yi, v) in y.iter().zip(&basis) {
            work.iter_mut().zip(v).for_each(|(w, v)| *w += yi * v);
        }
        precond(&work, &mut z);
        x.iter_mut().zip(&z).for_each(|(x, z)| *x += z);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(v: &[f64], out: &mut [f64]) {
        let n = v.len();
        for i in 0..n {
            let left = if i > 0 { v[i - 1] } else { 0.0 };
            let right = if i + 1 < n { v[i + 1] } else { 0.0 };
            // Nonsymmetric and indefinite-free: diagonal 3, off-diagonals -1 and -0.5.
            out[i] = 3.0 * v[i] - left - 0.5 * right;
        }
    }

    #[test]
    fn solves_nonsymmetric_system() {
        let n = 200;
        let exact: Vec<f64> = (0..n).map(|i| (i as f64 * 0.1).sin()).collect();
        let mut b = vec![0.0; n];
        tridiag(&exact, &mut b);
        let mut x = vec![0.0; n];
        let opts = GmresOptions {
            rel_tol: 1e-12,
            restart: 10,
            max_iter: 500,
        };
        let rep = gmres(tridiag, |v, o| o.copy_from_slice(v), &b, &mut x, 0.0, &opts).unwrap();
        assert!(rep.relative_residual <= 1e-12);
        let err = x.iter().zip(&exact).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-10, "error {err:e}");
    }

    #[test]
    fn exact_preconditioner_converges_in_one_step() {
        let b = vec![1.0, -2.0, 0.5];
        let mut x = vec![0.0; 3];
        let scale = |v: &[f64], o: &mut [f64]| o.iter_mut().zip(v).for_each(|(o, v)| *o = 4.0 * v);
        let inv = |v: &[f64], o: &mut [f64]| o.iter_mut().zip(v).for_each(|(o, v)| *o = 0.25 * v);
        let rep = gmres(scale, inv, &b, &mut x, 0.0, &GmresOptions::default()).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!((x[1] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn reports_non_convergence_with_history() {
        let b = vec![1.0; 50];
        let mut x = vec![0.0; 50];
        let opts = GmresOptions {
            rel_tol: 1e-14,
            restart: 2,
            max_iter: 4,
        };
        match gmres(tridiag, |v, o| o.copy_from_slice(v), &b, &mut x, 0.0, &opts) {
            Err(Error::NonConvergence { solver, history, .. }) => {
                assert_eq!(solver, "gmres");
                assert!(history.len() >= 2);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn backward_error_accounts_for_operator_norm() {
        let b = vec![1.0; 40];
        let mut x = vec![0.0; 40];
        let opts = GmresOptions {
            rel_tol: 1e-12,
            restart: 40,
            max_iter: 200,
        };
        let rep = gmres(tridiag, |v, o| o.copy_from_slice(v), &b, &mut x, 4.5, &opts).unwrap();
        let mut ax = vec![0.0; 40];
        tridiag(&x, &mut ax);
        let r = norm(&b.iter().zip(&ax).map(|(b, a)| b - a).collect::<Vec<_>>());
        assert!((rep.relative_residual - r / (norm(&b) + 4.5 * norm(&x))).abs() < 1e-18);
        assert!(rep.relative_residual <= 1e-12);
    }
}
