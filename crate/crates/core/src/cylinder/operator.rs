//! Fourth-order finite-difference operators on the (t, θ) cylinder and the
//! separable preconditioner used by the Newton–GMRES solver.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::numerics::offset_weights;

/// Sparse row: (column, coefficient).
pub(crate) type Row = Vec<(usize, f64)>;

fn folded(i: usize, offsets: &[i64], weights: &[f64]) -> Row {
    let mut row: Row = Vec::with_capacity(offsets.len());
    for (&o, &c) in offsets.iter().zip(weights) {
        // Even reflection across the pole: w(−θ) = w(θ).
        let col = (i as i64 + o).unsigned_abs() as usize;
        match row.iter_mut().find(|(j, _)| *j == col) {
            Some(entry) => entry.1 += c,
            None => row.push((col, c)),
        }
    }
    row
}

fn stencil_offsets(i: usize, last: usize) -> Vec<i64> {
    if i + 2 <= last {
        vec![-2, -1, 0, 1, 2]
    } else if i < last {
        vec![-4, -3, -2, -1, 0, 1]
    } else {
        vec![-5, -4, -3, -2, -1, 0]
    }
}

/// Rows of Δ'w = w_θθ + (N−2) cot θ w_θ for θ nodes 0..n−2; the node at π/2
/// is a homogeneous Dirichlet node and is dropped from the rows.
pub(crate) fn laplace_beltrami_rows(dim: u32, ntheta: usize, h: f64) -> Vec<Row> {
    let last = ntheta - 1;
    let m = f64::from(dim - 2);
    (0..last)
        .map(|i| {
            let offsets = stencil_offsets(i, last);
            let d2 = offset_weights(&offsets, 2, h);
            let coeffs: Vec<f64> = if i == 0 {
                // cot θ · w_θ → w_θθ at the pole.
                d2.iter().map(|c| (m + 1.0) * c).collect()
            } else {
                let d1 = offset_weights(&offsets, 1, h);
                let cot = 1.0 / (i as f64 * h).tan();
                d2.iter().zip(&d1).map(|(a, b)| a + m * cot * b).collect()
            };
            folded(i, &offsets, &coeffs)
                .into_iter()
                .filter(|&(col, _)| col != last)
                .collect()
        })
        .collect()
}

/// Rows of w_θ at every θ node (zero at the pole by symmetry).
pub(crate) fn theta_derivative_rows(ntheta: usize, h: f64) -> Vec<Row> {
    let last = ntheta - 1;
    (0..ntheta)
        .map(|i| {
            if i == 0 {
                return Vec::new();
            }
            let offsets = stencil_offsets(i, last);
            folded(i, &offsets, &offset_weights(&offsets, 1, h))
        })
        .collect()
}

pub(crate) fn apply_row(row: &Row, values: &[f64]) -> f64 {
    row.iter().map(|&(j, c)| c * values[j]).sum()
}

/// Rows of w_tt − β w_t (index into the full t range) for interior nodes
/// 1..nt−2, and the first-derivative rows used by the energy.
pub(crate) struct TimeStencils {
    pub operator: Vec<Row>,
    pub derivative: Vec<Row>,
}

pub(crate) fn time_stencils(nt: usize, dt: f64, beta: f64) -> TimeStencils {
    let last = nt - 1;
    let mut operator = Vec::with_capacity(nt);
    let mut derivative = Vec::with_capacity(nt);
    for j in 0..nt {
        let offsets: Vec<i64> = if j == 0 {
            (0..6).collect()
        } else if j == 1 {
            (-1..5).collect()
        } else if j + 2 <= last {
            (-2..=2).collect()
        } else if j < last {
            (-4..=1).collect()
        } else {
            (-5..=0).collect()
        };
        let d1 = offset_weights(&offsets, 1, dt);
        let d2 = offset_weights(&offsets, 2, dt);
        let col = |o: i64| (j as i64 + o) as usize;
        derivative.push(offsets.iter().zip(&d1).map(|(&o, &c)| (col(o), c)).collect());
        operator.push(
            offsets
                .iter()
                .zip(d2.iter().zip(&d1))
                .map(|(&o, (&a, &b))| (col(o), a - beta * b))
                .collect(),
        );
    }
    TimeStencils { operator, derivative }
}

/// LU factors of a tridiagonal matrix with partial pivoting (LAPACK gtsv
/// elimination order), reusable for many right-hand sides.
pub(crate) struct TridiagonalLu {
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    fact: Vec<f64>,
    swapped: Vec<bool>,
}

impl TridiagonalLu {
    /// `dl`, `du` have length n−1. Returns `None` for an exactly singular matrix.
    pub fn new(mut dl: Vec<f64>, mut d: Vec<f64>, mut du: Vec<f64>) -> Option<Self> {
        let n = d.len();
        let mut fact = vec![0.0; n.saturating_sub(1)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    return None;
                }
                fact[i] = dl[i] / d[i];
                d[i + 1] -= fact[i] * du[i];
                dl[i] = 0.0;
            } else {
                fact[i] = d[i] / dl[i];
                swapped[i] = true;
                d[i] = dl[i];
                let temp = d[i + 1];
                d[i + 1] = du[i] - fact[i] * temp;
                if i + 2 < n {
                    dl[i] = du[i + 1];
                    du[i + 1] = -fact[i] * dl[i];
                } else {
                    dl[i] = 0.0;
                }
                du[i] = temp;
            }
        }
        if d[n - 1] == 0.0 {
            return None;
        }
        Some(Self {
            d,
            du,
            du2: dl,
            fact,
            swapped,
        })
    }

    pub fn solve(&self, b: &mut [f64]) {
        let n = self.d.len();
        for i in 0..n - 1 {
            if self.swapped[i] {
                let temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - self.fact[i] * b[i + 1];
            } else {
                b[i + 1] -= self.fact[i] * b[i];
            }
        }
        b[n - 1] /= self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
    }
}

/// Approximate inverse of the Newton Jacobian: second-order separable
/// operator with the potential averaged over t, diagonalized in θ by a
/// symmetric finite-volume discretization and solved per mode in t.
pub(crate) struct SeparablePreconditioner {
    /// W^{1/2} Q, applied to θ-vectors as (W^{1/2}Q)ᵀ r.
    forward: DMatrix<f64>,
    /// W^{−1/2} Q.
    backward: DMatrix<f64>,
    modes: Vec<TridiagonalLu>,
    interior_t: usize,
    /// Smallest θ eigenvalue of −Δ' − potential.
    pub lowest: f64,
}

impl SeparablePreconditioner {
    /// `potential[i]` is the θ-dependent zeroth-order coefficient (ℓ + q w^{q−1}
    /// averaged over t) on the unknown θ nodes. The t operator is taken in
    /// the variables e^{−σt}w, which conjugates D_t by e^{σ dt} per step.
    pub fn new(dim: u32, h: f64, potential: &[f64], nt: usize, dt: f64, beta: f64, sigma: f64) -> Option<Self> {
        let m = potential.len();
        let p = dim as i32 - 2;
        let face = |i: usize| ((i as f64 + 0.5) * h).sin().powi(p) / h;
        let mut vol: Vec<f64> = (0..m).map(|i| (i as f64 * h).sin().powi(p) * h).collect();
        vol[0] = (0.5 * h).powi(p + 1) / f64::from(dim - 1);
        let mut s = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            let mut diag = face(i);
            if i > 0 {
                diag += face(i - 1);
                let off = -face(i - 1) / (vol[i] * vol[i - 1]).sqrt();
                s[(i, i - 1)] = off;
                s[(i - 1, i)] = off;
            }
            s[(i, i)] = diag / vol[i] - potential[i];
        }
        let eig = SymmetricEigen::new(s);
        let mut forward = eig.eigenvectors.clone();
        let mut backward = eig.eigenvectors;
        for i in 0..m {
            let w = vol[i].sqrt();
            forward.row_mut(i).scale_mut(w);
            backward.row_mut(i).scale_mut(1.0 / w);
        }
        let interior_t = nt - 2;
        let lo = (-1.0 / (dt * dt) - beta / (2.0 * dt)) * (-sigma * dt).exp();
        let hi = (-1.0 / (dt * dt) + beta / (2.0 * dt)) * (sigma * dt).exp();
        let lowest = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        let modes = eig
            .eigenvalues
            .iter()
            .map(|&lam| {
                TridiagonalLu::new(
                    vec![lo; interior_t - 1],
                    vec![2.0 / (dt * dt) + lam; interior_t],
                    vec![hi; interior_t - 1],
                )
            })
            .collect::<Option<Vec<_>>>()?;
        Some(Self {
            forward,
            backward,
            modes,
            interior_t,
            lowest,
        })
    }

    /// `r` is row-major (interior t) × (θ unknowns); writes −(T⊗I + I⊗A)⁻¹ r.
    pub fn apply(&self, r: &[f64], out: &mut [f64]) {
        let m = self.modes.len();
        let rt = nalgebra::DMatrixView::from_slice(r, m, self.interior_t);
        let mut coeffs = self.forward.tr_mul(&rt);
        let mut line = vec![0.0; self.interior_t];
        for (k, lu) in self.modes.iter().enumerate() {
            for (j, v) in line.iter_mut().enumerate() {
                *v = coeffs[(k, j)];
            }
            lu.solve(&mut line);
            for (j, v) in line.iter().enumerate() {
                coeffs[(k, j)] = -v;
            }
        }
        let x = &self.backward * coeffs;
        out.copy_from_slice(x.as_slice());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn laplace_beltrami_is_fourth_order_on_cos() {
        // Δ' cos θ = −(N−1) cos θ on S^{N−1}.
        let err = |n: usize| {
            let h = FRAC_PI_2 / (n - 1) as f64;
            let vals: Vec<f64> = (0..n).map(|i| (i as f64 * h).cos()).collect();
            laplace_beltrami_rows(5, n, h)
                .iter()
                .enumerate()
                .map(|(i, row)| (apply_row(row, &vals) + 4.0 * vals[i]).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(65), err(129));
        assert!(e2 < 1e-5, "{e2:e}");
        assert!(e1 / e2 > 12.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn preconditioner_inverts_separable_operator() {
        let (dim, m, nt, dt, beta) = (4u32, 20usize, 12usize, 0.4, -2.0);
        let h = FRAC_PI_2 / m as f64;
        let pot: Vec<f64> = (0..m).map(|i| 2.0 + (i as f64 * 0.3).sin()).collect();
        for sigma in [0.0, -1.0] {
            let pre = SeparablePreconditioner::new(dim, h, &pot, nt, dt, beta, sigma).unwrap();
            let jn = nt - 2;
            let x: Vec<f64> = (0..jn * m).map(|k| ((k * 7 % 13) as f64 - 6.0) / 5.0).collect();
            let face = |i: usize| ((i as f64 + 0.5) * h).sin().powi(2) / h;
            let vol = |i: usize| {
                if i == 0 {
                    (0.5 * h).powi(3) / 3.0
                } else {
                    (i as f64 * h).sin().powi(2) * h
                }
            };
            // Unscaled field e^{σt}x.
            let at = |j: isize, i: usize| {
                if j < 0 || j >= jn as isize {
                    0.0
                } else {
                    (sigma * j as f64 * dt).exp() * x[j as usize * m + i]
                }
            };
            let mut y = vec![0.0; jn * m];
            for j in 0..jn as isize {
                for i in 0..m {
                    let c = at(j, i);
                    let tpart = (2.0 * c - at(j - 1, i) - at(j + 1, i)) / (dt * dt)
                        + beta * (at(j + 1, i) - at(j - 1, i)) / (2.0 * dt);
                    let mut flux = face(i) * (c - if i + 1 < m { at(j, i + 1) } else { 0.0 });
                    if i > 0 {
                        flux += face(i - 1) * (c - at(j, i - 1));
                    }
                    let apart = flux / vol(i) - pot[i] * c;
                    y[j as usize * m + i] = -(tpart + apart) * (-sigma * j as f64 * dt).exp();
                }
            }
            let mut back = vec![0.0; jn * m];
            pre.apply(&y, &mut back);
            let err = back.iter().zip(&x).fold(0.0f64, |e, (a, b)| e.max((a - b).abs()));
            assert!(err < 1e-10, "sigma {sigma}: error {err:e}");
        }
    }

    #[test]
    fn pivoted_tridiagonal_solve() {
        // Indefinite matrix where unpivoted elimination hits a zero pivot.
        let lu = TridiagonalLu::new(vec![1.0, 1.0, 1.0], vec![0.0, 2.0, -1.0, 3.0], vec![1.0, -1.0, 2.0]).unwrap();
        let x = [1.0, -2.0, 0.5, 4.0];
        let mut b = vec![
            x[1],
            x[0] + 2.0 * x[1] - x[2],
            x[1] - x[2] + 2.0 * x[3],
            x[2] + 3.0 * x[3],
        ];
        lu.solve(&mut b);
        for (a, e) in b.iter().zip(x) {
            assert!((a - e).abs() < 1e-14);
        }
    }

    #[test]
    fn time_stencil_is_exact_for_quartics() {
        let (nt, dt, beta) = (12, 0.3, -2.0);
        let st = time_stencils(nt, dt, beta);
        let f = |t: f64| t.powi(4) - t;
        let vals: Vec<f64> = (0..nt).map(|j| f(j as f64 * dt)).collect();
        for j in 1..nt - 1 {
            let t = j as f64 * dt;
            let want = 12.0 * t * t - beta * (4.0 * t.powi(3) - 1.0);
            assert!((apply_row(&st.operator[j], &vals) - want).abs() < 1e-9, "row {j}");
        }
    }
}
