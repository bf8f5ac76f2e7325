//! Integral identities satisfied by positive solutions of the meridian
//! equation, evaluated as residuals on computed profiles.
//!
//! Every spherical integral carries the `|S^{N-2}|` factor so that boundary
//! terms on the equator are compared with their true measure.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exponents::{critical_exponents, ProblemParams};
use crate::numerics::{gauss_legendre, sphere_area};
use crate::output::real;
use crate::sphere_ode::{same_grid, sphere_integral, weighted_sphere_integral, RadialProfile};

const RELATIVE_FLOOR: f64 = 1e-30;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityReport {
    pub name: String,
    #[serde(serialize_with = "real")]
    pub lhs: f64,
    #[serde(serialize_with = "real")]
    pub rhs: f64,
    #[serde(serialize_with = "real")]
    pub residual: f64,
    #[serde(serialize_with = "real")]
    pub relative_residual: f64,
}

impl IdentityReport {
    pub fn new(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        let residual = lhs - rhs;
        let scale = lhs.abs().max(rhs.abs()).max(RELATIVE_FLOOR);
        Self {
            name: name.into(),
            lhs,
            rhs,
            residual,
            relative_residual: residual.abs() / scale,
        }
    }

    pub fn holds(&self, rel_tol: f64) -> bool {
        self.relative_residual <= rel_tol
    }
}

fn positive_power(v: f64, q: f64) -> f64 {
    if v > 0.0 {
        v.powf(q)
    } else {
        0.0
    }
}

/// `(λ1 − λ)∫vφ = ∫v^q φ` with φ = cos θ the first Dirichlet eigenfunction.
///
/// Any positive profile with λ ≥ λ1 makes the left side non-positive and the
/// right side positive, so the identity cannot hold there.
pub fn phi_balance_residual(profile: &RadialProfile, params: &ProblemParams) -> IdentityReport {
    let grid = &profile.grid;
    let vphi: Vec<f64> = grid.nodes().zip(&profile.v).map(|(t, v)| v * t.cos()).collect();
    let vqphi: Vec<f64> = grid
        .nodes()
        .zip(&profile.v)
        .map(|(t, &v)| positive_power(v, params.q) * t.cos())
        .collect();
    let lhs = (params.lambda1() - params.lambda) * weighted_sphere_integral(grid, params.dim, &vphi);
    let rhs = weighted_sphere_integral(grid, params.dim, &vqphi);
    IdentityReport::new("phi_balance", lhs, rhs)
}

/// First coefficient of the Pohožaev identity, (N−3)(q−q3)/(q+1). Computed
/// as ((N−3)q − (N+1))/(q+1) so it vanishes exactly at q = q3.
pub fn pohozaev_gradient_coefficient(params: &ProblemParams) -> f64 {
    let n = f64::from(params.dim);
    ((n - 3.0) * params.q - (n + 1.0)) / (params.q + 1.0)
}

/// Pohožaev identity for axisymmetric profiles:
///
/// ```text
/// (N−3)(q−q3)/(q+1) ∫v'²φ − (N−1)(q−1)/(q+1)(λ + (N−1)/(q−1)) ∫v²φ = −|S^{N−2}| v'(π/2)²
/// ```
pub fn pohozaev_residual(profile: &RadialProfile, params: &ProblemParams) -> IdentityReport {
    let n = f64::from(params.dim);
    let q = params.q;
    let grid = &profile.grid;
    let grad: Vec<f64> = grid.nodes().zip(&profile.dv).map(|(t, d)| d * d * t.cos()).collect();
    let grad_int = weighted_sphere_integral(grid, params.dim, &grad);
    let mass_int = sphere_integral(profile, params.dim, 2, f64::cos);
    // (q−1)(λ + (N−1)/(q−1)) written without the division.
    let mass_coeff = (n - 1.0) * ((q - 1.0) * params.lambda + (n - 1.0)) / (q + 1.0);
    let lhs = pohozaev_gradient_coefficient(params) * grad_int - mass_coeff * mass_int;
    let slope = profile.boundary_slope();
    let rhs = -sphere_area(params.dim - 2) * slope * slope;
    IdentityReport::new("pohozaev", lhs, rhs)
}

/// Exponent α = 2(N−2)/(q+3) of the substitution w = sin^α θ · v.
pub fn kwong_li_alpha(params: &ProblemParams) -> f64 {
    2.0 * f64::from(params.dim - 2) / (params.q + 3.0)
}

/// w = sin^α θ · v with w' by the product rule, and w'(π/2) = v'(π/2).
///
/// For α < 1 the derivative is unbounded at the pole; `dv[0]` then holds the
/// one-sided difference quotient over the first interval.
pub fn kwong_li_transform(profile: &RadialProfile, params: &ProblemParams) -> Result<(RadialProfile, f64)> {
    let alpha = kwong_li_alpha(params);
    let grid = profile.grid;
    let mut w = Vec::with_capacity(grid.len());
    let mut dw = Vec::with_capacity(grid.len());
    for (i, t) in grid.nodes().enumerate() {
        let (s, c) = t.sin_cos();
        let (v, dv) = (profile.v[i], profile.dv[i]);
        w.push(s.powf(alpha) * v);
        dw.push(if i == 0 {
            0.0
        } else {
            alpha * s.powf(alpha - 1.0) * c * v + s.powf(alpha) * dv
        });
    }
    w[0] = 0.0;
    dw[0] = (w[1] - w[0]) / grid.h();
    let last = grid.len() - 1;
    // sin(π/2) = 1 and the cos term drops out.
    dw[last] = profile.dv[last];
    let slope = dw[last];
    Ok((RadialProfile::new(grid, w, dw)?, slope))
}

/// Constants of G(θ) = sin^{β'}θ (α1 sin²θ + α2). `None` fields have not been
/// supplied and make [`kwong_li_residual`] refuse to run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct KwongLiWeight {
    pub alpha: Option<f64>,
    pub beta_prime: Option<f64>,
    pub alpha1: Option<f64>,
    pub alpha2: Option<f64>,
}

impl KwongLiWeight {
    /// Closed forms from substituting w = sin^α v, multiplying by
    /// 2 sin^{α(q−1)}θ w' and integrating over (0, π/2):
    ///
    /// ```text
    /// β' = α(q−1) − 2,   α1 = λ + α(N−2−α),   α2 = α(α+3−N)
    /// ```
    ///
    /// α2 < 0 for every admissible (N, q); the identity holds regardless.
    pub fn derived(params: &ProblemParams) -> Self {
        let n = f64::from(params.dim);
        let a = kwong_li_alpha(params);
        Self {
            alpha: Some(a),
            beta_prime: Some(a * (params.q - 1.0) - 2.0),
            alpha1: Some(params.lambda + a * (n - 2.0 - a)),
            alpha2: Some(a * (a + 3.0 - n)),
        }
    }

    fn constants(&self) -> Result<(f64, f64, f64, f64)> {
        let missing: Vec<&str> = [
            ("alpha", self.alpha),
            ("beta_prime", self.beta_prime),
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
        ]
        .iter()
        .filter(|(_, v)| v.is_none())
        .map(|(k, _)| *k)
        .collect();
        match (self.alpha, self.beta_prime, self.alpha1, self.alpha2) {
            (Some(a), Some(b), Some(a1), Some(a2)) => Ok((a, b, a1, a2)),
            _ => Err(Error::NotDerivedYet(format!("missing {}", missing.join(", ")))),
        }
    }

    pub fn g(&self, theta: f64) -> Result<f64> {
        let (_, b, a1, a2) = self.constants()?;
        let s = theta.sin();
        Ok(s.powf(b) * (a1 * s * s + a2))
    }

    pub fn g_prime(&self, theta: f64) -> Result<f64> {
        let (_, b, a1, a2) = self.constants()?;
        let (s, c) = theta.sin_cos();
        Ok(c * ((b + 2.0) * a1 * s.powf(b + 1.0) + b * a2 * s.powf(b - 1.0)))
    }
}

/// `w'(π/2)² = ∫₀^{π/2} G'(θ) w²(θ) dθ`.
///
/// G'w² behaves like θ^p with p = α(q+1) − 3 ∈ (−1, 0) at the pole, so the
/// integral uses product integration: the smooth factor θ^{−p} G' w² is
/// interpolated quadratically and integrated against θ^p exactly.
pub fn kwong_li_residual(
    profile: &RadialProfile,
    params: &ProblemParams,
    weight: &KwongLiWeight,
) -> Result<IdentityReport> {
    let (alpha, b, a1, a2) = weight.constants()?;
    let p = b - 1.0 + 2.0 * alpha;
    let grid = &profile.grid;
    let h = grid.h();
    // G'w² = θ^p · smooth with smooth = (sinθ/θ)^p cosθ [(β'+2)α1 sin²θ + β'α2] v².
    let smooth: Vec<f64> = grid
        .nodes()
        .zip(&profile.v)
        .map(|(t, &v)| {
            let (s, c) = t.sin_cos();
            let ratio = if t == 0.0 { 1.0 } else { s / t };
            ratio.powf(p) * c * ((b + 2.0) * a1 * s * s + b * a2) * v * v
        })
        .collect();
    let rhs = singular_product_integral(&smooth, h, p);
    let (_, slope) = kwong_li_transform(profile, params)?;
    Ok(IdentityReport::new("kwong_li", slope * slope, rhs))
}

/// ∫₀^{(n−1)h} θ^p f(θ) dθ for samples of a smooth f at θ_i = i·h, p > −1.
fn singular_product_integral(f: &[f64], h: f64, p: f64) -> f64 {
    let n = f.len();
    assert!(n >= 3, "product integration needs three nodes");
    let intervals = n - 1;
    let (gx, gw) = gauss_legendre(12);
    let mut total = 0.0;
    let mut panel = |i0: usize, from: usize, to: usize| {
        // Quadratic through nodes i0, i0+1, i0+2, integrated over [θ_from, θ_to].
        let x0 = i0 as f64 * h;
        let moments = if from == 0 {
            // Monomials in θ against θ^p, exact.
            let (a, b) = (0.0_f64, to as f64 * h);
            let m = |k: f64| (b.powf(p + k + 1.0) - a.powf(p + k + 1.0)) / (p + k + 1.0);
            [m(0.0), m(1.0), m(2.0)]
        } else {
            let (a, b) = (from as f64 * h, to as f64 * h);
            let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
            let mut m = [0.0; 3];
            for (x, w) in gx.iter().zip(&gw) {
                let t = mid + half * x;
                let base = w * half * t.powf(p);
                m[0] += base;
                m[1] += base * t;
                m[2] += base * t * t;
            }
            m
        };
        // Lagrange basis on x0, x0+h, x0+2h written in monomials of θ.
        let nodes = [x0, x0 + h, x0 + 2.0 * h];
        for k in 0..3 {
            let (xa, xb) = (nodes[(k + 1) % 3], nodes[(k + 2) % 3]);
            let denom = (nodes[k] - xa) * (nodes[k] - xb);
            let integral = (moments[2] - (xa + xb) * moments[1] + xa * xb * moments[0]) / denom;
            total += f[i0 + k] * integral;
        }
    };
    let paired = if intervals % 2 == 0 { intervals } else { intervals - 1 };
    for i0 in (0..paired).step_by(2) {
        panel(i0, i0, i0 + 2);
    }
    if paired < intervals {
        panel(n - 3, n - 2, n - 1);
    }
    total
}

/// `∫ v1 v2 (v2^{q−1} − v1^{q−1})` against sin^{N−2}θ dθ (times |S^{N−2}|).
/// Vanishes for two solutions of the same equation; positive when p2 = c·p1
/// with c > 1 and p1 > 0.
pub fn cross_term(p1: &RadialProfile, p2: &RadialProfile, params: &ProblemParams) -> Result<IdentityReport> {
    same_grid(&p1.grid, &p2.grid)?;
    let f: Vec<f64> =
        p1.v.iter()
            .zip(&p2.v)
            .map(|(&a, &b)| {
                let d = positive_power(b, params.q - 1.0) - positive_power(a, params.q - 1.0);
                a * b * d
            })
            .collect();
    let value = weighted_sphere_integral(&p1.grid, params.dim, &f);
    Ok(IdentityReport::new("cross_term", value, 0.0))
}

/// Sign changes of v1 − v2 over interior nodes; exact ties are skipped so
/// the signs on either side decide.
pub fn intersection_count(p1: &RadialProfile, p2: &RadialProfile) -> Result<usize> {
    same_grid(&p1.grid, &p2.grid)?;
    let n = p1.v.len();
    let mut count = 0;
    let mut last: Option<bool> = None;
    for i in 1..n - 1 {
        let d = p1.v[i] - p2.v[i];
        if d == 0.0 {
            continue;
        }
        let sign = d > 0.0;
        if last.is_some_and(|s| s != sign) {
            count += 1;
        }
        last = Some(sign);
    }
    Ok(count)
}

/// True when the Pohožaev gradient coefficient vanishes at q = q3 to
/// machine precision.
pub fn pohozaev_degenerates_at_q3(dim: u32) -> Result<bool> {
    let q3 = critical_exponents(dim)?.q3_f64();
    let params = ProblemParams::with_ell(dim, q3)?;
    Ok(pohozaev_gradient_coefficient(&params).abs() <= 4.0 * f64::EPSILON * f64::from(dim))
}
