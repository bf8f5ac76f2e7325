//! Energy, decay and shape diagnostics of solved cylinder fields.

use std::io::Write;

use serde::Serialize;

use super::operator::{apply_row, theta_derivative_rows, time_stencils};
use super::CylinderField;
use crate::error::{Error, Result};
use crate::exponents::{critical_exponents, damping_coefficient, ProblemParams};
use crate::identities::IdentityReport;
use crate::numerics::composite_weights;
use crate::output::{real, write_csv};
use crate::sphere_ode::{weighted_sphere_integral, RadialProfile};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergySample {
    #[serde(serialize_with = "real")]
    pub t: f64,
    #[serde(serialize_with = "real")]
    pub h: f64,
    /// Finite-difference derivative of H along the samples.
    #[serde(serialize_with = "real")]
    pub hdot: f64,
    /// ∫ w_t² dσ.
    #[serde(serialize_with = "real")]
    pub kinetic: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyTrace {
    pub samples: Vec<EnergySample>,
}

impl EnergyTrace {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_csv(
            out,
            &["t", "H", "kinetic"],
            self.samples.iter().map(|s| vec![s.t, s.h, s.kinetic]),
        )?;
        Ok(())
    }

    /// Largest violation of monotonicity in the direction `sign` (−1 for
    /// nonincreasing, +1 for nondecreasing) over samples with t in [t1, t2].
    pub fn monotonicity_violation(&self, sign: f64, t1: f64, t2: f64) -> f64 {
        self.samples
            .windows(2)
            .filter(|w| w[0].t >= t1 && w[1].t <= t2)
            .map(|w| -sign * (w[1].h - w[0].h))
            .fold(0.0, f64::max)
    }
}

/// H(t) = ½ ∫ (w_t² − |∇'w|² + ℓ w² + 2/(q+1) w^{q+1}) dσ at every interior t node.
///
/// The ℓw² term enters with a plus sign: multiplying the cylinder equation by
/// w_t gives d/dt of this H equal to β ∫ w_t² dσ.
pub fn energy_trace(field: &CylinderField, params: &ProblemParams) -> Result<EnergyTrace> {
    let grid = field.grid;
    let (nt, n) = (grid.nt, grid.ntheta);
    let beta = damping_coefficient(params.dim, params.q)?;
    let dt_rows = time_stencils(nt, grid.dt(), beta).derivative;
    let dtheta_rows = theta_derivative_rows(n, grid.dtheta());
    let th = grid.theta_grid();
    let q = params.q;
    let mut samples = Vec::with_capacity(nt - 2);
    let mut wt = vec![0.0; n];
    let mut dens = vec![0.0; n];
    for j in 1..nt - 1 {
        let row = field.row(j);
        for i in 0..n {
            wt[i] = dt_rows[j].iter().map(|&(jj, c)| c * field.at(jj, i)).sum();
            let wth = apply_row(&dtheta_rows[i], row);
            let v = row[i];
            let pot = if v > 0.0 {
                2.0 / (q + 1.0) * v.powf(q + 1.0)
            } else {
                0.0
            };
            dens[i] = wt[i] * wt[i] - wth * wth + params.lambda * v * v + pot;
        }
        let kin: Vec<f64> = wt.iter().map(|x| x * x).collect();
        samples.push(EnergySample {
            t: grid.t(j),
            h: 0.5 * weighted_sphere_integral(&th, params.dim, &dens),
            hdot: 0.0,
            kinetic: weighted_sphere_integral(&th, params.dim, &kin),
        });
    }
    let dt = grid.dt();
    let k = samples.len();
    for s in 0..k {
        samples[s].hdot = if s == 0 {
            (samples[1].h - samples[0].h) / dt
        } else if s == k - 1 {
            (samples[k - 1].h - samples[k - 2].h) / dt
        } else {
            (samples[s + 1].h - samples[s - 1].h) / (2.0 * dt)
        };
    }
    Ok(EnergyTrace { samples })
}

/// Node range covering [T/4, 3T/4] (inner nodes when they fall between).
fn window(trace: &EnergyTrace, t_max: f64) -> std::ops::Range<usize> {
    let (t1, t2) = (0.25 * t_max, 0.75 * t_max);
    let eps = 1e-9 * t_max;
    let first = trace.samples.iter().position(|s| s.t >= t1 - eps).unwrap_or(0);
    let last = trace.samples.iter().rposition(|s| s.t <= t2 + eps).unwrap_or(0);
    first..last + 1
}

/// H(t₂) − H(t₁) against β ∫_{t₁}^{t₂} ∫ w_t² dσ dt on [T/4, 3T/4].
pub fn energy_identity_residual(trace: &EnergyTrace, params: &ProblemParams, t_max: f64) -> Result<IdentityReport> {
    let beta = damping_coefficient(params.dim, params.q)?;
    let range = window(trace, t_max);
    let s = &trace.samples[range];
    if s.len() < 2 {
        return Err(Error::domain("energy window holds fewer than two samples"));
    }
    let dt = s[1].t - s[0].t;
    let kin: f64 = composite_weights(s.len(), dt)
        .iter()
        .zip(s)
        .map(|(w, x)| w * x.kinetic)
        .sum();
    Ok(IdentityReport::new("energy_law", s[s.len() - 1].h - s[0].h, beta * kin))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayFit {
    /// Least-squares slope of log X against log t.
    #[serde(serialize_with = "real")]
    pub exponent: f64,
    /// Tail average of z(t) = t^{(N−1)/2} X(t) / ∫φ² dσ.
    #[serde(serialize_with = "real")]
    pub kappa: f64,
    #[serde(serialize_with = "real")]
    pub t_start: f64,
    #[serde(serialize_with = "real")]
    pub t_end: f64,
}

fn phi_moment(field: &CylinderField, dim: u32, j: usize) -> f64 {
    let th = field.grid.theta_grid();
    let f: Vec<f64> = th.nodes().zip(field.row(j)).map(|(t, w)| w * t.cos()).collect();
    weighted_sphere_integral(&th, dim, &f)
}

fn phi_norm_sq(field: &CylinderField, dim: u32) -> f64 {
    let th = field.grid.theta_grid();
    let f: Vec<f64> = th.nodes().map(|t| t.cos().powi(2)).collect();
    weighted_sphere_integral(&th, dim, &f)
}

/// Fits X(t) = ∫ w φ dσ ~ t^γ on [T/4, 3T/4] at the critical exponent q = q₁.
pub fn critical_decay_fit(field: &CylinderField, params: &ProblemParams) -> Result<DecayFit> {
    let q1 = critical_exponents(params.dim)?.q1_f64();
    if (params.q - q1).abs() > 1e-12 * q1 {
        return Err(Error::domain(format!(
            "critical decay needs q = q1 = {q1}, got {}",
            params.q
        )));
    }
    let grid = field.grid;
    if grid.t_max < 50.0 {
        return Err(Error::domain(format!(
            "critical decay needs T >= 50, got {}",
            grid.t_max
        )));
    }
    let dt = grid.dt();
    let j1 = (0.25 * grid.t_max / dt).ceil() as usize;
    let j2 = (0.75 * grid.t_max / dt).floor() as usize;
    let mut pts = Vec::with_capacity(j2 - j1 + 1);
    for j in j1..=j2 {
        let x = phi_moment(field, params.dim, j);
        if x <= 0.0 {
            return Err(Error::Numerical(format!(
                "X(t) = {x:e} <= 0 at t = {}; the field is not on the singular branch",
                grid.t(j)
            )));
        }
        pts.push((grid.t(j), x));
    }
    let k = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (t, x)| (a + t.ln(), b + x.ln()));
    let (mx, my) = (sx / k, sy / k);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, x) in &pts {
        let (dx, dy) = (t.ln() - mx, x.ln() - my);
        sxy += dx * dy;
        sxx += dx * dx;
    }
    let half = f64::from(params.dim - 1) / 2.0;
    let norm = phi_norm_sq(field, params.dim);
    let tail = &pts[pts.len() * 3 / 4..];
    let kappa = tail.iter().map(|(t, x)| t.powf(half) * x / norm).sum::<f64>() / tail.len() as f64;
    Ok(DecayFit {
        exponent: sxy / sxx,
        kappa,
        t_start: pts[0].0,
        t_end: pts[pts.len() - 1].0,
    })
}

/// The first-order slow decay at q = q₁. Projecting the equation onto
/// φ = cos θ (for which Δ'φ + ℓφ = 0) and dropping x'' leaves
/// −β x' = −c x^q with c = ∫φ^{q+1}dσ / ∫φ²dσ, whose decaying solution is
/// x(t) = ((q−1) c t / |β|)^{−1/(q−1)} ∝ t^{−(N−1)/2}.
pub fn slow_manifold_amplitude(params: &ProblemParams, t: f64) -> Result<f64> {
    let q1 = critical_exponents(params.dim)?.q1_f64();
    if (params.q - q1).abs() > 1e-12 * q1 {
        return Err(Error::domain(format!(
            "slow decay needs q = q1 = {q1}, got {}",
            params.q
        )));
    }
    if !(t > 0.0) {
        return Err(Error::domain(format!("slow decay needs t > 0, got {t}")));
    }
    let th = crate::sphere_ode::ThetaGrid::new(crate::sphere_ode::DEFAULT_NODES)?;
    let moment = |p: f64| {
        let f: Vec<f64> = th.nodes().map(|x| x.cos().max(0.0).powf(p)).collect();
        weighted_sphere_integral(&th, params.dim, &f)
    };
    let c = moment(params.q + 1.0) / moment(2.0);
    let beta = damping_coefficient(params.dim, params.q)?.abs();
    Ok(((params.q - 1.0) * c * t / beta).powf(-1.0 / (params.q - 1.0)))
}

/// max_θ |η(t,·)/z(t) − cos θ| with η = t^{(N−1)/2} w and z the normalized
/// φ-moment of η; the power of t cancels.
pub fn eta_shape_error(field: &CylinderField, params: &ProblemParams, t: f64) -> Result<f64> {
    let p = field.profile_at(t)?;
    let th = field.grid.theta_grid();
    let f: Vec<f64> = th.nodes().zip(&p.v).map(|(t, w)| w * t.cos()).collect();
    let x = weighted_sphere_integral(&th, params.dim, &f);
    if x <= 0.0 {
        return Err(Error::Numerical(format!("X({t}) = {x:e} <= 0")));
    }
    let z = x / phi_norm_sq(field, params.dim);
    Ok(th
        .nodes()
        .zip(&p.v)
        .map(|(t, w)| (w / z - t.cos()).abs())
        .fold(0.0, f64::max))
}

/// sup of w/cos θ over all nodes off the equator.
pub fn bound_diagnostic(field: &CylinderField) -> f64 {
    let th = field.grid.theta_grid();
    let n = field.grid.ntheta;
    let inv_cos: Vec<f64> = th.nodes().take(n - 1).map(|t| 1.0 / t.cos()).collect();
    (0..field.grid.nt)
        .flat_map(|j| {
            field.row(j)[..n - 1]
                .iter()
                .zip(&inv_cos)
                .map(|(w, c)| w * c)
                .collect::<Vec<_>>()
        })
        .fold(0.0, f64::max)
}

/// Max-norm distance between w(T/2, ·) and `target` (same or finer nested grid).
pub fn mid_profile_distance(field: &CylinderField, target: &RadialProfile) -> Result<f64> {
    let mid = field.profile_at(0.5 * field.grid.t_max)?;
    let target = if target.grid == mid.grid {
        target.clone()
    } else {
        target.restrict_to(mid.grid)?
    };
    Ok(mid
        .v
        .iter()
        .zip(&target.v)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::super::CylinderGrid;
    use super::*;
    use crate::sphere_ode::ThetaGrid;

    fn cosine_field(t_max: f64, nt: usize, n: usize, amp: impl Fn(f64) -> f64) -> CylinderField {
        let grid = CylinderGrid::new(t_max, nt, n).unwrap();
        let th = grid.theta_grid();
        let w = (0..nt).flat_map(|j| {
            let a = amp(grid.t(j));
            th.nodes().map(move |t| a * t.cos()).collect::<Vec<_>>()
        });
        CylinderField {
            grid,
            w: w.collect(),
            stats: Default::default(),
        }
    }

    #[test]
    fn zero_field_diagnostics() {
        let f = cosine_field(60.0, 65, 67, |_| 0.0);
        let p = ProblemParams::with_ell(4, 5.0 / 3.0).unwrap();
        let tr = energy_trace(&f, &p).unwrap();
        assert!(tr.samples.iter().all(|s| s.h == 0.0 && s.kinetic == 0.0));
        let r = energy_identity_residual(&tr, &p, 60.0).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
        assert_eq!(bound_diagnostic(&f), 0.0);
        assert!(critical_decay_fit(&f, &p).is_err());
        let target = RadialProfile::from_fn(ThetaGrid::new(67).unwrap(), |t| 2.0 * t.cos(), |t| -2.0 * t.sin());
        assert!((mid_profile_distance(&f, &target).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn decay_fit_recovers_power_law() {
        let p = ProblemParams::with_ell(4, 5.0 / 3.0).unwrap();
        let f = cosine_field(60.0, 241, 67, |t| 3.0 * (1.0 + t).powf(-1.5));
        let fit = critical_decay_fit(&f, &p).unwrap();
        assert!((fit.exponent + 1.5).abs() < 0.1, "{fit:?}");
        assert!(eta_shape_error(&f, &p, 45.0).unwrap() < 1e-10);
        let short = cosine_field(40.0, 81, 67, |t| (1.0 + t).powf(-1.5));
        assert!(critical_decay_fit(&short, &p).is_err());
    }

    #[test]
    fn bound_of_cosine_multiple() {
        let f = cosine_field(10.0, 65, 129, |t| 1.0 + t);
        assert!((bound_diagnostic(&f) - 11.0).abs() < 1e-12);
    }

    #[test]
    fn interpolated_profile_between_rows() {
        let f = cosine_field(10.0, 64, 67, |t| t * t);
        let p = f.profile_at(5.0).unwrap();
        assert!((p.v[0] - 25.0).abs() < 1e-12);
    }

    #[test]
    fn slow_amplitude_matches_beta_function_moments() {
        // c = B(3/2, 11/6)/2 ÷ (π/16) for N = 4, q = 5/3.
        let p = ProblemParams::with_ell(4, 5.0 / 3.0).unwrap();
        let x = slow_manifold_amplitude(&p, 64.5).unwrap();
        assert!((x - 0.04247653665067388).abs() < 1e-9, "{x}");
        let ratio = slow_manifold_amplitude(&p, 8.0 * 64.5).unwrap() / x;
        assert!((ratio - 8f64.powf(-1.5)).abs() < 1e-12);
        assert!(slow_manifold_amplitude(&ProblemParams::with_ell(4, 2.0).unwrap(), 1.0).is_err());
    }
}
