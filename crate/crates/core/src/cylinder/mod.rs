//! The log-cylinder equation
//!
//! ```text
//! w_tt − β w_t + Δ'w + ℓ_{N,q} w + w^q = 0,   β = N − 2(q+1)/(q−1)
//! ```
//!
//! for axisymmetric w(t, θ) on (0, T) × (0, π/2), posed as an elliptic
//! boundary-value problem: Dirichlet data at t = 0 and t = T, w = 0 on the
//! equator and even reflection at the pole. It is never marched in t; the
//! Cauchy problem for this operator is ill-posed.

mod diagnostics;
mod operator;

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use diagnostics::{
    bound_diagnostic, critical_decay_fit, energy_identity_residual, energy_trace, eta_shape_error,
    mid_profile_distance, slow_manifold_amplitude, DecayFit, EnergySample, EnergyTrace,
};

use crate::error::{Error, Result};
use crate::exponents::{critical_exponents, damping_coefficient, ell, ProblemParams};
use crate::krylov::{gmres, GmresOptions};
use crate::output::write_csv;
use crate::sphere_ode::{RadialProfile, ThetaGrid, MIN_NODES};
use operator::{apply_row, laplace_beltrami_rows, theta_derivative_rows, time_stencils, SeparablePreconditioner};

pub const MIN_CYLINDER_NODES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderGrid {
    pub t_max: f64,
    pub nt: usize,
    pub ntheta: usize,
}

impl CylinderGrid {
    pub fn new(t_max: f64, nt: usize, ntheta: usize) -> Result<Self> {
        if !(t_max.is_finite() && t_max > 0.0) {
            return Err(Error::domain(format!("cylinder length must be positive, got {t_max}")));
        }
        if nt < MIN_CYLINDER_NODES || ntheta < MIN_NODES {
            return Err(Error::domain(format!(
                "cylinder grid needs at least {MIN_CYLINDER_NODES} t nodes and {MIN_NODES} theta nodes, got {nt} x {ntheta}"
            )));
        }
        Ok(Self { t_max, nt, ntheta })
    }

    pub fn dt(&self) -> f64 {
        self.t_max / (self.nt - 1) as f64
    }

    pub fn dtheta(&self) -> f64 {
        self.theta_grid().h()
    }

    pub fn t(&self, j: usize) -> f64 {
        if j == self.nt - 1 {
            self.t_max
        } else {
            j as f64 * self.dt()
        }
    }

    pub fn theta_grid(&self) -> ThetaGrid {
        ThetaGrid::new(self.ntheta).expect("validated node count")
    }

    /// Same cylinder with both spacings halved.
    pub fn refined(&self) -> Self {
        Self {
            t_max: self.t_max,
            nt: 2 * self.nt - 1,
            ntheta: 2 * self.ntheta - 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CylinderOptions {
    /// Newton stops once the residual max-norm is at most this…
    pub newton_tol: f64,
    /// …and the last update is at most `step_tol · max(1, max|w|)`.
    pub step_tol: f64,
    pub max_newton: usize,
    pub max_halvings: usize,
    pub gmres: GmresOptions,
    /// Undershoots in [−undershoot_tol, 0) are projected to 0.
    pub undershoot_tol: f64,
}

impl Default for CylinderOptions {
    fn default() -> Self {
        Self {
            newton_tol: 1e-8,
            step_tol: 1e-10,
            max_newton: 50,
            max_halvings: 20,
            gmres: GmresOptions::default(),
            undershoot_tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SolveStats {
    pub newton_iterations: usize,
    pub gmres_iterations: usize,
    pub residual_history: Vec<f64>,
    pub projected_nodes: usize,
    /// q = q₂, where the asymptotic theory does not apply.
    pub outside_theory: bool,
    /// Max-norm change made to the data at t = T when it was replaced by a
    /// discrete steady state; 0 otherwise.
    pub far_data_shift: f64,
    /// Data-continuation steps taken after plain Newton failed.
    pub continuation_steps: usize,
    /// σ when the equations were solved for e^{−σt}(w − S); 0 if unscaled.
    pub t_scaling: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CylinderField {
    pub grid: CylinderGrid,
    /// Row-major: `w[j * ntheta + i]` at (t_j, θ_i).
    pub w: Vec<f64>,
    pub stats: SolveStats,
}

impl CylinderField {
    pub fn at(&self, j: usize, i: usize) -> f64 {
        self.w[j * self.grid.ntheta + i]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        let n = self.grid.ntheta;
        &self.w[j * n..(j + 1) * n]
    }

    /// The t-independent extension of a profile.
    pub fn constant(grid: CylinderGrid, profile: &RadialProfile) -> Result<Self> {
        let g = boundary_row(profile, &grid)?;
        let w = (0..grid.nt).flat_map(|_| g.iter().copied()).collect();
        Ok(Self {
            grid,
            w,
            stats: SolveStats::default(),
        })
    }

    /// Profile at an arbitrary t by cubic interpolation between t rows.
    pub fn profile_at(&self, t: f64) -> Result<RadialProfile> {
        if !(0.0..=self.grid.t_max).contains(&t) {
            return Err(Error::domain(format!("t = {t} is outside [0, {}]", self.grid.t_max)));
        }
        let nt = self.grid.nt;
        let s = t / self.grid.dt();
        let j = s.round() as usize;
        let values: Vec<f64> = if (s - j as f64).abs() < 1e-9 {
            self.row(j.min(nt - 1)).to_vec()
        } else {
            let base = (s.floor() as usize).saturating_sub(1).min(nt - 4);
            let nodes: Vec<f64> = (base..base + 4).map(|k| k as f64).collect();
            let weights = crate::numerics::fd_weights(s, &nodes, 0);
            (0..self.grid.ntheta)
                .map(|i| (0..4).map(|k| weights[k] * self.at(base + k, i)).sum())
                .collect()
        };
        let grid = self.grid.theta_grid();
        let dv = theta_derivative_rows(grid.len(), grid.h())
            .iter()
            .map(|r| apply_row(r, &values))
            .collect();
        RadialProfile::new(grid, values, dv)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let th = self.grid.theta_grid();
        let rows = (0..self.grid.nt).flat_map(|j| {
            let t = self.grid.t(j);
            (0..self.grid.ntheta).map(move |i| vec![t, th.node(i), self.at(j, i)])
        });
        write_csv(out, &["t", "theta", "w"], rows)?;
        Ok(())
    }
}

/// Boundary data on the cylinder's θ nodes. Accepts profiles on the same
/// grid or on a finer nested one; the equator value is set to 0.
fn boundary_row(profile: &RadialProfile, grid: &CylinderGrid) -> Result<Vec<f64>> {
    let target = grid.theta_grid();
    let p = if profile.grid == target {
        profile.clone()
    } else {
        profile.restrict_to(target)?
    };
    let scale = p.max_abs().max(1.0);
    if let Some(bad) = p.v.iter().find(|&&v| v < -1e-12 * scale) {
        return Err(Error::domain(format!(
            "boundary data must be nonnegative, found {bad:e}"
        )));
    }
    if p.boundary_value().abs() > 1e-6 * scale {
        return Err(Error::domain(format!(
            "boundary data must vanish at the equator, found {:e}",
            p.boundary_value()
        )));
    }
    let mut v: Vec<f64> = p.v.iter().map(|&v| v.max(0.0)).collect();
    *v.last_mut().unwrap() = 0.0;
    Ok(v)
}

/// Data at t = T within this relative distance of a discrete steady state
/// is replaced by that steady state.
const SNAP_TOL: f64 = 1e-4;

const MIN_CONTINUATION_STEP: f64 = 1.0 / 1024.0;

/// Newton for the t-independent problem Δ'S + λS + S₊^q = 0 on the
/// cylinder's θ discretization, started from `guess` (equator value 0).
fn steady_row(params: &ProblemParams, rows: &[operator::Row], guess: &[f64]) -> Option<Vec<f64>> {
    let m = rows.len();
    let q = params.q;
    let mut s = guess.to_vec();
    for _ in 0..40 {
        let mut jac = DMatrix::<f64>::zeros(m, m);
        let mut res = DVector::<f64>::zeros(m);
        for (i, row) in rows.iter().enumerate() {
            let v = s[i];
            let (src, slope) = if v > 0.0 {
                (v.powf(q), q * v.powf(q - 1.0))
            } else {
                (0.0, 0.0)
            };
            res[i] = apply_row(row, &s) + params.lambda * v + src;
            for &(c, w) in row {
                jac[(i, c)] += w;
            }
            jac[(i, i)] += params.lambda + slope;
        }
        let step = jac.lu().solve(&res)?;
        for i in 0..m {
            s[i] -= step[i];
        }
        let scale = max_abs(&s).max(1.0);
        if !step.amax().is_finite() {
            return None;
        }
        if step.amax() <= 1e-14 * scale {
            return Some(s);
        }
    }
    None
}

/// The steady state of the discrete θ operator nearest to `guess`: the
/// profile that the cylinder solver treats as exactly t-independent.
pub fn discrete_steady_state(params: &ProblemParams, guess: &RadialProfile) -> Result<RadialProfile> {
    let grid = guess.grid;
    let n = grid.len();
    let rows = laplace_beltrami_rows(params.dim, n, grid.h());
    let mut s = steady_row(params, &rows, &guess.v).ok_or_else(|| Error::NonConvergence {
        solver: "steady-state newton",
        iterations: 40,
        last_residual: f64::NAN,
        history: Vec::new(),
    })?;
    s[n - 1] = 0.0;
    let dv = theta_derivative_rows(n, grid.h())
        .iter()
        .map(|r| apply_row(r, &s))
        .collect();
    RadialProfile::new(grid, s, dv)
}

/// The discrete problem in the correction u = w − S about a t-independent
/// reference S, with unknowns and equations scaled by e^{−σt}.
///
/// Both devices matter when the linearization has a mode with
/// κ < −β²/4: its t-exponents are β/2 ± iν, so the two-point problem
/// amplifies perturbations at t = T by e^{|β|T/2}. Writing the equations
/// for u keeps rounding errors proportional to the local deviation from S,
/// and σ = β/2 turns that mode into a bounded oscillation.
struct Discretization {
    params: ProblemParams,
    grid: CylinderGrid,
    theta_rows: Vec<operator::Row>,
    time_rows: Vec<operator::Row>,
    scaled_time_rows: Vec<operator::Row>,
    sigma: f64,
    /// e^{−σ t_j}.
    row_scale: Vec<f64>,
    reference: Vec<f64>,
}

impl Discretization {
    fn new(params: &ProblemParams, grid: CylinderGrid, beta: f64, sigma: f64, reference: Vec<f64>) -> Self {
        let time_rows = time_stencils(grid.nt, grid.dt(), beta).operator;
        let scaled_time_rows = time_rows
            .iter()
            .enumerate()
            .map(|(j, row)| {
                row.iter()
                    .map(|&(jj, c)| (jj, c * (sigma * (jj as f64 - j as f64) * grid.dt()).exp()))
                    .collect()
            })
            .collect();
        Self {
            params: *params,
            grid,
            theta_rows: laplace_beltrami_rows(params.dim, grid.ntheta, grid.dtheta()),
            time_rows,
            scaled_time_rows,
            sigma,
            row_scale: (0..grid.nt).map(|j| (-sigma * j as f64 * grid.dt()).exp()).collect(),
            reference,
        }
    }

    fn unknowns_theta(&self) -> usize {
        self.grid.ntheta - 1
    }

    /// (S + u)₊^q − S₊^q, accurate to rounding relative to the result.
    fn source_increment(&self, s: f64, u: f64) -> f64 {
        let q = self.params.q;
        let w = s + u;
        match (s > 0.0, w > 0.0) {
            (true, true) => s.powf(q) * (q * (u / s).ln_1p()).exp_m1(),
            (true, false) => -s.powf(q),
            (false, true) => w.powf(q),
            (false, false) => 0.0,
        }
    }

    fn source_slope(&self, w: f64) -> f64 {
        if w > 0.0 {
            self.params.q * w.powf(self.params.q - 1.0)
        } else {
            0.0
        }
    }

    /// Scaled residual on interior t rows and non-equator θ nodes, row-major.
    /// Returns the max-norm of the unscaled residual and the 2-norm of the
    /// scaled one.
    fn residual(&self, u: &[f64], out: &mut [f64]) -> (f64, f64) {
        let (nt, n, m) = (self.grid.nt, self.grid.ntheta, self.unknowns_theta());
        let lambda = self.params.lambda;
        let (mut plain, mut scaled) = (0.0f64, 0.0f64);
        for j in 1..nt - 1 {
            let row = &u[j * n..(j + 1) * n];
            for i in 0..m {
                let ut: f64 = self.time_rows[j].iter().map(|&(jj, c)| c * u[jj * n + i]).sum();
                let v = row[i];
                let r =
                    ut + apply_row(&self.theta_rows[i], row) + lambda * v + self.source_increment(self.reference[i], v);
                let rs = r * self.row_scale[j];
                plain = plain.max(r.abs());
                scaled += rs * rs;
                out[(j - 1) * m + i] = rs;
            }
        }
        (plain, scaled.sqrt())
    }

    /// Scaled Jacobian-vector product; `slope` holds ℓ + q w^{q−1} per unknown.
    fn jacobian(&self, slope: &[f64], x: &[f64], out: &mut [f64]) {
        let (nt, m) = (self.grid.nt, self.unknowns_theta());
        for j in 1..nt - 1 {
            let row = &x[(j - 1) * m..j * m];
            for i in 0..m {
                let mut s = 0.0;
                for &(jj, c) in &self.scaled_time_rows[j] {
                    if jj >= 1 && jj <= nt - 2 {
                        s += c * x[(jj - 1) * m + i];
                    }
                }
                for &(ii, c) in &self.theta_rows[i] {
                    s += c * row[ii];
                }
                let k = (j - 1) * m + i;
                out[k] = s + slope[k] * x[k];
            }
        }
    }

    /// Largest absolute row sum of the scaled Jacobian.
    fn norm_estimate(&self, slope: &[f64]) -> f64 {
        let t = self
            .scaled_time_rows
            .iter()
            .map(|r| r.iter().map(|(_, c)| c.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let th = self
            .theta_rows
            .iter()
            .map(|r| r.iter().map(|(_, c)| c.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        t + th + max_abs(slope)
    }

    /// ℓ + q w^{q−1} at the interior unknowns and its average over t.
    fn slopes(&self, u: &[f64], slope: &mut [f64]) -> Vec<f64> {
        let (nt, n, m) = (self.grid.nt, self.grid.ntheta, self.unknowns_theta());
        let mut potential = vec![0.0; m];
        for j in 1..nt - 1 {
            for i in 0..m {
                let k = (j - 1) * m + i;
                slope[k] = self.params.lambda + self.source_slope(self.reference[i] + u[j * n + i]);
                potential[i] += slope[k] / (nt - 2) as f64;
            }
        }
        potential
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Damped Newton on the interior of `u`, whose boundary rows hold the data.
fn newton(disc: &Discretization, u: &mut [f64], opts: &CylinderOptions, stats: &mut SolveStats) -> Result<()> {
    let (params, grid) = (&disc.params, disc.grid);
    let beta = damping_coefficient(params.dim, params.q)?;
    let (nt, n, m) = (grid.nt, grid.ntheta, disc.unknowns_theta());
    let unknowns = (nt - 2) * m;
    let mut slope = vec![0.0; unknowns];
    let mut res = vec![0.0; unknowns];
    let (mut plain, mut scaled) = disc.residual(u, &mut res);
    stats.residual_history.push(plain);
    let mut last_step = f64::INFINITY;
    let mut trial = u.to_vec();
    let mut trial_res = vec![0.0; unknowns];
    let (mut iterations, mut stalled) = (0, 0);

    loop {
        let size = (1..nt - 1)
            .flat_map(|j| (0..m).map(move |i| (j, i)))
            .fold(0.0f64, |s, (j, i)| s.max((u[j * n + i] * disc.row_scale[j]).abs()))
            .max(1.0);
        if plain.max(max_abs(&res)) <= opts.newton_tol && last_step <= opts.step_tol * size {
            break;
        }
        // Three iterations in a row with under 1% progress: a residual
        // minimum that is not a solution.
        if iterations >= opts.max_newton || stalled >= 3 || !scaled.is_finite() {
            return Err(Error::NonConvergence {
                solver: "newton",
                iterations,
                last_residual: plain,
                history: stats.residual_history.clone(),
            });
        }
        stats.newton_iterations += 1;
        iterations += 1;

        let potential = disc.slopes(u, &mut slope);
        let pre = SeparablePreconditioner::new(params.dim, grid.dtheta(), &potential, nt, grid.dt(), beta, disc.sigma)
            .ok_or_else(|| Error::Numerical("singular preconditioner".into()))?;
        let rhs: Vec<f64> = res.iter().map(|r| -r).collect();
        let mut delta = vec![0.0; unknowns];
        let report = gmres(
            |x, out| disc.jacobian(&slope, x, out),
            |x, out| pre.apply(x, out),
            &rhs,
            &mut delta,
            disc.norm_estimate(&slope),
            &opts.gmres,
        );
        let report = match report {
            Ok(r) => r,
            // The residual already meets the tolerance and is at rounding
            // level; there is nothing left for the linear solver to resolve.
            Err(Error::NonConvergence { .. }) if plain.max(max_abs(&res)) <= opts.newton_tol => break,
            Err(e) => return Err(e),
        };
        stats.gmres_iterations += report.iterations;

        // Damped update: halve until the residual decreases.
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            trial.copy_from_slice(u);
            for j in 1..nt - 1 {
                let back = 1.0 / disc.row_scale[j];
                for i in 0..m {
                    trial[j * n + i] += alpha * back * delta[(j - 1) * m + i];
                }
            }
            let (p, sc) = disc.residual(&trial, &mut trial_res);
            if sc < scaled || (p.max(max_abs(&trial_res)) <= opts.newton_tol && sc.is_finite()) {
                accepted = true;
                stalled = if sc > 0.99 * scaled && p.max(max_abs(&trial_res)) > opts.newton_tol {
                    stalled + 1
                } else {
                    0
                };
                (plain, scaled) = (p, sc);
                break;
            }
            alpha *= 0.5;
        }
        stats.residual_history.push(plain);
        if !accepted {
            return Err(Error::NonConvergence {
                solver: "newton",
                iterations,
                last_residual: plain,
                history: stats.residual_history.clone(),
            });
        }
        u.copy_from_slice(&trial);
        std::mem::swap(&mut res, &mut trial_res);
        last_step = alpha * max_abs(&delta);
    }
    Ok(())
}

/// Solves the cylinder problem with data g0 at t = 0 and g1 at t = T.
///
/// If g1 lies within discretization error of a steady state of the discrete
/// θ operator (for instance ω₀ sampled from a shooting profile), that steady
/// state is used as the data at t = T; `stats.far_data_shift` records the
/// change.
pub fn solve_cylinder(
    params: &ProblemParams,
    g0: &RadialProfile,
    g1: &RadialProfile,
    grid: &CylinderGrid,
    opts: &CylinderOptions,
) -> Result<CylinderField> {
    let grid = CylinderGrid::new(grid.t_max, grid.nt, grid.ntheta)?;
    let ell_nq = ell(params.dim, params.q)?;
    if (params.lambda - ell_nq).abs() > 1e-12 * ell_nq.abs().max(1.0) {
        return Err(Error::domain(format!(
            "the cylinder equation uses lambda = ell = {ell_nq}, got {}",
            params.lambda
        )));
    }
    let q2 = critical_exponents(params.dim)?.q2_f64();
    let beta = damping_coefficient(params.dim, params.q)?;
    let (nt, n) = (grid.nt, grid.ntheta);
    let top = boundary_row(g0, &grid)?;
    let mut bottom = boundary_row(g1, &grid)?;
    let mut stats = SolveStats {
        outside_theory: (params.q - q2).abs() <= 1e-12 * q2,
        ..Default::default()
    };

    let theta_rows = laplace_beltrami_rows(params.dim, n, grid.dtheta());
    let mut reference = vec![0.0; n];
    let far = max_abs(&bottom);
    if far > 0.0 {
        if let Some(s) = steady_row(params, &theta_rows, &bottom[..n - 1]) {
            let shift = s.iter().zip(&bottom).fold(0.0f64, |d, (a, b)| d.max((a - b).abs()));
            if shift <= SNAP_TOL * far && s.iter().all(|&v| v >= -1e-12 * far) {
                reference[..n - 1].iter_mut().zip(&s).for_each(|(r, v)| *r = v.max(0.0));
                bottom.copy_from_slice(&reference);
                stats.far_data_shift = shift;
            }
        }
    }

    // The correction u = w − S; the interior starts at u = 0, so the first
    // Newton step solves the problem linearized about S.
    let mut u = vec![0.0; nt * n];
    for i in 0..n {
        u[i] = top[i] - reference[i];
        u[(nt - 1) * n + i] = bottom[i] - reference[i];
    }

    let mut disc = Discretization::new(params, grid, beta, 0.0, reference.clone());
    let m = disc.unknowns_theta();
    let unknowns = (nt - 2) * m;
    let mut slope = vec![0.0; unknowns];
    let potential = disc.slopes(&u, &mut slope);
    let probe = SeparablePreconditioner::new(params.dim, grid.dtheta(), &potential, nt, grid.dt(), beta, 0.0)
        .ok_or_else(|| Error::Numerical("singular preconditioner".into()))?;
    let sigma = if probe.lowest < -0.25 * beta * beta {
        0.5 * beta
    } else {
        0.0
    };
    if sigma != 0.0 {
        disc = Discretization::new(params, grid, beta, sigma, reference.clone());
    }
    stats.t_scaling = sigma;

    let direct = newton(&disc, &mut u, opts, &mut stats);
    if let Err(Error::NonConvergence { .. }) = direct {
        // Continuation in the boundary data, from S at both ends (where
        // u = 0) to (g0, g1).
        let ends: Vec<(usize, f64)> = (0..n)
            .map(|i| (i, top[i] - reference[i]))
            .chain((0..n).map(|i| ((nt - 1) * n + i, bottom[i] - reference[i])))
            .collect();
        u.iter_mut().for_each(|v| *v = 0.0);
        let (mut s, mut ds) = (0.0f64, 0.25f64);
        let mut accepted = u.clone();
        while s < 1.0 {
            let next = (s + ds).min(1.0);
            u.copy_from_slice(&accepted);
            for &(k, v) in &ends {
                u[k] = next * v;
            }
            stats.continuation_steps += 1;
            match newton(&disc, &mut u, opts, &mut stats) {
                Ok(()) => {
                    s = next;
                    accepted.copy_from_slice(&u);
                    ds = (1.5 * ds).min(0.5);
                }
                Err(Error::NonConvergence { .. }) if ds > MIN_CONTINUATION_STEP => ds *= 0.5,
                Err(e) => return Err(e),
            }
        }
    } else {
        direct?;
    }

    let mut w: Vec<f64> = u.iter().enumerate().map(|(k, v)| reference[k % n] + v).collect();
    w[..n].copy_from_slice(&top);
    for v in &mut w {
        if *v < 0.0 {
            if *v < -opts.undershoot_tol {
                return Err(Error::Numerical(format!(
                    "solution undershoots to {v:e}, beyond the projection tolerance"
                )));
            }
            *v = 0.0;
            stats.projected_nodes += 1;
        }
    }
    Ok(CylinderField { grid, w, stats })
}
