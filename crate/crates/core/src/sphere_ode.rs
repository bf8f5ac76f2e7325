//! Axisymmetric profiles on the upper half sphere S^{N-1}_+.
//!
//! A positive solution of `-Δ'v = λv + v^q` vanishing on the equator depends
//! only on the polar angle θ ∈ [0, π/2] and solves
//!
//! ```text
//! v'' + (N-2) cot θ v' + λ v + v^q = 0,   v'(0) = 0,   v(π/2) = 0.
//! ```
//!
//! θ = 0 is a regular singular point. [`integrate_ivp`] starts from the smooth
//! branch through the series `v = a + c2 θ² + c4 θ⁴`, then advances with
//! classical RK4 on the uniform grid. A grid interval is split into substeps
//! only when the local length scale `1/sqrt(|f'(v)|)` of the nonlinearity is
//! shorter than the grid spacing (large amplitudes); at desk-scale amplitudes
//! every interval is a single RK4 step.

use std::f64::consts::FRAC_PI_2;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponents::ProblemParams;
use crate::numerics::{composite_weights, sphere_area};

/// Smallest node count: 64 interior nodes plus the two endpoints.
pub const MIN_NODES: usize = 66;
pub const DEFAULT_NODES: usize = 4096;

/// Uniform grid on [0, π/2].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThetaGrid {
    nodes: usize,
}

impl ThetaGrid {
    pub fn new(nodes: usize) -> Result<Self> {
        if nodes < MIN_NODES {
            return Err(Error::domain(format!(
                "theta grid needs at least {MIN_NODES} nodes, got {nodes}"
            )));
        }
        Ok(Self { nodes })
    }

    pub fn len(&self) -> usize {
        self.nodes
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn h(&self) -> f64 {
        FRAC_PI_2 / (self.nodes - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.nodes {
            FRAC_PI_2
        } else {
            i as f64 * self.h()
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.nodes).map(|i| self.node(i))
    }

    /// Grid with half the spacing; every node of `self` is a node of the result.
    pub fn refined(&self) -> Self {
        Self {
            nodes: 2 * self.nodes - 1,
        }
    }

    /// Grid with `factor` times as many intervals.
    pub fn refined_by(&self, factor: usize) -> Self {
        Self {
            nodes: (self.nodes - 1) * factor + 1,
        }
    }

    /// `Some(k)` when node i of `self` is node k·i of `fine`.
    pub fn nesting_factor(&self, fine: &ThetaGrid) -> Option<usize> {
        let (c, f) = (self.nodes - 1, fine.nodes - 1);
        (f % c == 0).then_some(f / c)
    }
}

/// Meridian profile θ ↦ (v, v') sampled on a [`ThetaGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct RadialProfile {
    pub grid: ThetaGrid,
    pub v: Vec<f64>,
    pub dv: Vec<f64>,
}

impl RadialProfile {
    pub fn new(grid: ThetaGrid, v: Vec<f64>, dv: Vec<f64>) -> Result<Self> {
        if v.len() != grid.len() || dv.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "profile has {} values and {} derivatives on a {}-node grid",
                v.len(),
                dv.len(),
                grid.len()
            )));
        }
        if let Some(i) = v.iter().chain(&dv).position(|x| !x.is_finite()) {
            return Err(Error::Numerical(format!("non-finite profile entry at index {i}")));
        }
        Ok(Self { grid, v, dv })
    }

    pub fn from_fn(grid: ThetaGrid, f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64) -> Self {
        let v = grid.nodes().map(&f).collect();
        let dv = grid.nodes().map(&df).collect();
        Self { grid, v, dv }
    }

    pub fn zero(grid: ThetaGrid) -> Self {
        Self {
            grid,
            v: vec![0.0; grid.len()],
            dv: vec![0.0; grid.len()],
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid,
            v: self.v.iter().map(|x| c * x).collect(),
            dv: self.dv.iter().map(|x| c * x).collect(),
        }
    }

    pub fn amplitude(&self) -> f64 {
        self.v[0]
    }

    pub fn boundary_value(&self) -> f64 {
        *self.v.last().unwrap()
    }

    pub fn boundary_slope(&self) -> f64 {
        *self.dv.last().unwrap()
    }

    pub fn max_abs(&self) -> f64 {
        self.v.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &RadialProfile) -> Result<f64> {
        same_grid(&self.grid, &other.grid)?;
        Ok(self.v.iter().zip(&other.v).fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Samples a profile given on a nested finer grid at the nodes of `coarse`.
    pub fn restrict_to(&self, coarse: ThetaGrid) -> Result<Self> {
        let k = coarse.nesting_factor(&self.grid).ok_or_else(|| {
            Error::GridMismatch(format!(
                "{}-node grid is not nested in the {}-node grid",
                coarse.len(),
                self.grid.len()
            ))
        })?;
        Ok(Self {
            grid: coarse,
            v: (0..coarse.len()).map(|i| self.v[i * k]).collect(),
            dv: (0..coarse.len()).map(|i| self.dv[i * k]).collect(),
        })
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "theta,v,dv")?;
        for (i, theta) in self.grid.nodes().enumerate() {
            writeln!(
                out,
                "{},{},{}",
                crate::output::fmt_f64(theta),
                crate::output::fmt_f64(self.v[i]),
                crate::output::fmt_f64(self.dv[i])
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != "theta,v,dv" {
            return Err(Error::Config(format!("unexpected profile header {header:?}")));
        }
        let (mut v, mut dv) = (Vec::new(), Vec::new());
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("bad profile row {line:?}: {e}")))?;
            if fields.len() != 3 {
                return Err(Error::Config(format!("profile row needs 3 fields: {line:?}")));
            }
            v.push(fields[1]);
            dv.push(fields[2]);
        }
        RadialProfile::new(ThetaGrid::new(v.len())?, v, dv)
    }
}

pub(crate) fn same_grid(a: &ThetaGrid, b: &ThetaGrid) -> Result<()> {
    if a != b {
        return Err(Error::GridMismatch(format!(
            "{}-node grid vs {}-node grid",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Knobs for [`integrate_ivp_with`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IvpOptions {
    /// Include the `v^q` term. Disabled only for linear probes.
    pub nonlinear: bool,
    /// Series start radius in grid spacings.
    pub pole_buffer: f64,
    /// |v| or |v'| above this marks blowup.
    pub blowup_threshold: f64,
    /// Stop after the grid interval containing the first sign change.
    pub stop_at_zero: bool,
}

impl Default for IvpOptions {
    fn default() -> Self {
        Self {
            nonlinear: true,
            pole_buffer: 10.0,
            blowup_threshold: 1e12,
            stop_at_zero: true,
        }
    }
}

impl IvpOptions {
    pub fn linear() -> Self {
        Self {
            nonlinear: false,
            stop_at_zero: false,
            ..Self::default()
        }
    }
}

/// Outcome of one shot from the pole.
///
/// `v` and `dv` cover the nodes actually reached; a shot that neither hit a
/// zero nor blew up reaches every node.
#[derive(Clone, Debug, PartialEq)]
pub struct IvpResult {
    pub grid: ThetaGrid,
    pub amplitude: f64,
    pub v: Vec<f64>,
    pub dv: Vec<f64>,
    pub first_zero: Option<f64>,
    /// Node indices (i, i+1) with v_i > 0 >= v_{i+1} around `first_zero`.
    pub zero_bracket: Option<(usize, usize)>,
    pub blowup: bool,
    pub blowup_angle: Option<f64>,
}

/// Classification of a shot used by the shooting driver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ShotEvent {
    /// First zero at θ* ≤ π/2.
    Zero(f64),
    /// Positive up to and including π/2 (or nonnegative there).
    NoZero,
    Blowup(f64),
}

impl IvpResult {
    pub fn reached_end(&self) -> bool {
        self.v.len() == self.grid.len()
    }

    pub fn event(&self) -> ShotEvent {
        if let Some(t) = self.blowup_angle {
            ShotEvent::Blowup(t)
        } else if let Some(t) = self.first_zero {
            ShotEvent::Zero(t)
        } else {
            ShotEvent::NoZero
        }
    }

    /// Full-grid profile, if the shot reached π/2.
    pub fn profile(&self) -> Option<RadialProfile> {
        self.reached_end().then(|| RadialProfile {
            grid: self.grid,
            v: self.v.clone(),
            dv: self.dv.clone(),
        })
    }

    pub fn into_profile(self) -> Option<RadialProfile> {
        if self.reached_end() {
            Some(RadialProfile {
                grid: self.grid,
                v: self.v,
                dv: self.dv,
            })
        } else {
            None
        }
    }
}

/// Right-hand side data of the meridian equation.
#[derive(Clone, Copy, Debug)]
struct Meridian {
    n: f64,
    lambda: f64,
    q: f64,
    nonlinear: bool,
}

impl Meridian {
    fn new(params: &ProblemParams, nonlinear: bool) -> Self {
        Self {
            n: f64::from(params.dim - 2),
            lambda: params.lambda,
            q: params.q,
            nonlinear,
        }
    }

    #[inline]
    fn source(&self, v: f64) -> f64 {
        if self.nonlinear && v > 0.0 {
            self.lambda * v + v.powf(self.q)
        } else {
            self.lambda * v
        }
    }

    #[inline]
    fn source_slope(&self, v: f64) -> f64 {
        if self.nonlinear && v > 0.0 {
            self.lambda + self.q * v.powf(self.q - 1.0)
        } else {
            self.lambda
        }
    }

    #[inline]
    fn rhs(&self, theta: f64, v: f64, dv: f64) -> (f64, f64) {
        (dv, -self.n * dv / theta.tan() - self.source(v))
    }

    /// Length over which the source term changes the solution at O(1).
    fn local_scale(&self, v: f64) -> f64 {
        1.0 / (1.0 + self.source_slope(v).abs()).sqrt()
    }

    /// Coefficients (c2, c4) of the pole series v = a + c2 θ² + c4 θ⁴.
    fn series(&self, a: f64) -> (f64, f64) {
        let big_n = self.n + 2.0;
        let c2 = -self.source(a) / (2.0 * (big_n - 1.0));
        let c4 = c2 * (2.0 * self.n / 3.0 - self.source_slope(a)) / (4.0 * (big_n + 1.0));
        (c2, c4)
    }

    fn rk4(&self, theta: f64, v: f64, dv: f64, k: f64) -> (f64, f64) {
        let (a1, b1) = self.rhs(theta, v, dv);
        let (a2, b2) = self.rhs(theta + 0.5 * k, v + 0.5 * k * a1, dv + 0.5 * k * b1);
        let (a3, b3) = self.rhs(theta + 0.5 * k, v + 0.5 * k * a2, dv + 0.5 * k * b2);
        let (a4, b4) = self.rhs(theta + k, v + k * a3, dv + k * b3);
        (
            v + k / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4),
            dv + k / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4),
        )
    }
}

/// Pole series v(θ) = a − (λa + a^q) θ²/(2(N−1)) + c4 θ⁴ and its derivative.
pub fn pole_series(params: &ProblemParams, amplitude: f64, nonlinear: bool, theta: f64) -> (f64, f64) {
    let m = Meridian::new(params, nonlinear);
    let (c2, c4) = m.series(amplitude);
    let t2 = theta * theta;
    (
        amplitude + c2 * t2 + c4 * t2 * t2,
        2.0 * c2 * theta + 4.0 * c4 * t2 * theta,
    )
}

/// Radius where the pole series hands over to RK4.
pub fn series_radius(params: &ProblemParams, amplitude: f64, grid: &ThetaGrid, opts: &IvpOptions) -> f64 {
    let m = Meridian::new(params, opts.nonlinear);
    (opts.pole_buffer * grid.h()).min(SERIES_SCALE_FRACTION * m.local_scale(amplitude))
}

const SERIES_SCALE_FRACTION: f64 = 0.05;
const STEP_SCALE_FRACTION: f64 = 0.2;
const STEP_POLE_FRACTION: f64 = 0.05;
const STEP_POLE_CAP: f64 = 0.25;
const STEP_TOLERANCE: f64 = 1e-13;
const MIN_STEP_FRACTION: f64 = 1e-6;

pub fn integrate_ivp(params: &ProblemParams, amplitude: f64, grid: &ThetaGrid) -> Result<IvpResult> {
    integrate_ivp_with(params, amplitude, grid, &IvpOptions::default())
}

pub fn integrate_ivp_with(
    params: &ProblemParams,
    amplitude: f64,
    grid: &ThetaGrid,
    opts: &IvpOptions,
) -> Result<IvpResult> {
    if !(amplitude.is_finite() && amplitude > 0.0) {
        return Err(Error::domain(format!("amplitude must be positive, got {amplitude}")));
    }
    let m = Meridian::new(params, opts.nonlinear);
    let (c2, c4) = m.series(amplitude);
    let eps = series_radius(params, amplitude, grid, opts);

    let n = grid.len();
    let mut v = Vec::with_capacity(n);
    let mut dv = Vec::with_capacity(n);
    let mut result = IvpResult {
        grid: *grid,
        amplitude,
        v: Vec::new(),
        dv: Vec::new(),
        first_zero: None,
        zero_bracket: None,
        blowup: false,
        blowup_angle: None,
    };

    let series_at = |t: f64| {
        let t2 = t * t;
        (amplitude + c2 * t2 + c4 * t2 * t2, 2.0 * c2 * t + 4.0 * c4 * t2 * t)
    };
    let mut i = 0;
    while i < n && grid.node(i) <= eps {
        let (a, b) = series_at(grid.node(i));
        v.push(a);
        dv.push(b);
        i += 1;
    }
    let (mut theta, (mut y, mut dy)) = (eps, series_at(eps));
    if y <= 0.0 {
        return Err(Error::Numerical(format!(
            "pole series is not positive at its hand-over radius {eps:e}"
        )));
    }

    // Step doubling: one RK4 step against two half steps, error measured
    // relative to |v| + θ|v'| so the decaying tail of a concentrated profile
    // is resolved as finely as the core.
    let mut k_try = STEP_POLE_FRACTION * theta;
    let mut zero_seen: Option<f64> = None;
    while i < n {
        let target = grid.node(i);
        while theta < target {
            let remaining = target - theta;
            let mut k = k_try
                .min(STEP_SCALE_FRACTION * m.local_scale(y))
                .min(STEP_POLE_CAP * theta);
            if k >= remaining * (1.0 - 1e-12) {
                k = remaining;
            }
            let (y_new, dy_new, err) = loop {
                let full = m.rk4(theta, y, dy, k);
                let (ym, dym) = m.rk4(theta, y, dy, 0.5 * k);
                let half = m.rk4(theta + 0.5 * k, ym, dym, 0.5 * k);
                let scale = y.abs() + theta * dy.abs() + f64::MIN_POSITIVE;
                let err = (half.0 - full.0).abs().max(theta * (half.1 - full.1).abs()) / (15.0 * scale);
                if err <= STEP_TOLERANCE || k <= MIN_STEP_FRACTION * theta || !err.is_finite() {
                    break (half.0, half.1, err);
                }
                k *= (0.9 * (STEP_TOLERANCE / err).powf(0.2)).clamp(0.1, 0.5);
            };
            if y_new.is_nan() || dy_new.is_nan() {
                return Err(Error::Numerical(format!("NaN in meridian integration at θ = {theta}")));
            }
            let grow = if err > 0.0 {
                (0.9 * (STEP_TOLERANCE / err).powf(0.2)).min(4.0)
            } else {
                4.0
            };
            if k < remaining {
                k_try = k * grow;
            } else {
                k_try = k_try.max(k * grow);
            }
            if zero_seen.is_none() && y > 0.0 && y_new <= 0.0 {
                zero_seen = Some(hermite_root(theta, k, (y, dy), (y_new, dy_new)));
            }
            theta = if k == remaining { target } else { theta + k };
            y = y_new;
            dy = dy_new;
            if y.abs() > opts.blowup_threshold || dy.abs() > opts.blowup_threshold {
                return Ok(blown_up(result, v, dv, theta));
            }
        }
        v.push(y);
        dv.push(dy);
        if let (Some(z), None) = (zero_seen, result.first_zero) {
            result.first_zero = Some(z);
            result.zero_bracket = Some((i - 1, i));
            if opts.stop_at_zero {
                break;
            }
        }
        i += 1;
    }
    result.v = v;
    result.dv = dv;
    Ok(result)
}

fn blown_up(mut result: IvpResult, v: Vec<f64>, dv: Vec<f64>, theta: f64) -> IvpResult {
    result.v = v;
    result.dv = dv;
    result.blowup = true;
    result.blowup_angle = Some(theta);
    result.first_zero = None;
    result.zero_bracket = None;
    result
}

/// Zero of the cubic Hermite interpolant on [t0, t0+k] with p(t0) > 0 >= p(t0+k).
fn hermite_root(t0: f64, k: f64, (y0, d0): (f64, f64), (y1, d1): (f64, f64)) -> f64 {
    if y1 == 0.0 {
        return t0 + k;
    }
    let p = |s: f64| {
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * k * d0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * k * d1
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        if p(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    t0 + k * 0.5 * (lo + hi)
}

/// |S^{N-2}| ∫₀^{π/2} f(θ) sin^{N-2}θ dθ for nodal values `f` on `grid`.
pub fn weighted_sphere_integral(grid: &ThetaGrid, dim: u32, f: &[f64]) -> f64 {
    assert_eq!(f.len(), grid.len(), "integrand length must match the grid");
    let w = composite_weights(grid.len(), grid.h());
    let n = dim as i32 - 2;
    let sum: f64 = grid
        .nodes()
        .zip(&w)
        .zip(f)
        .map(|((t, w), f)| w * f * t.sin().powi(n))
        .sum();
    sphere_area(dim - 2) * sum
}

/// Integral over S^{N-1}_+ of `v^power · extra(θ)` for an axisymmetric profile.
pub fn sphere_integral(profile: &RadialProfile, dim: u32, power: i32, extra: impl Fn(f64) -> f64) -> f64 {
    let f: Vec<f64> = profile
        .grid
        .nodes()
        .zip(&profile.v)
        .map(|(t, &v)| if power == 0 { extra(t) } else { v.powi(power) * extra(t) })
        .collect();
    weighted_sphere_integral(&profile.grid, dim, &f)
}

/// Max over interior nodes (θ > 4h) of the centered-difference residual of
/// the meridian equation.
pub fn ode_residual(profile: &RadialProfile, params: &ProblemParams) -> f64 {
    ode_residual_with(profile, params, true)
}

pub fn ode_residual_with(profile: &RadialProfile, params: &ProblemParams, nonlinear: bool) -> f64 {
    let m = Meridian::new(params, nonlinear);
    let h = profile.grid.h();
    let v = &profile.v;
    let mut worst: f64 = 0.0;
    for i in 5..profile.grid.len() - 1 {
        let t = profile.grid.node(i);
        let d2 = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (h * h);
        let d1 = (v[i + 1] - v[i - 1]) / (2.0 * h);
        let r = d2 + m.n * d1 / t.tan() + m.source(v[i]);
        worst = worst.max(r.abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn params(dim: u32, q: f64, lambda: f64) -> ProblemParams {
        ProblemParams::new(dim, q, lambda).unwrap()
    }

    fn cos_error(nodes: usize) -> f64 {
        let g = ThetaGrid::new(nodes).unwrap();
        let r = integrate_ivp_with(&params(4, 2.0, 3.0), 1.0, &g, &IvpOptions::linear()).unwrap();
        g.nodes().zip(&r.v).fold(0.0, |m, (t, v)| m.max((v - t.cos()).abs()))
    }

    #[test]
    fn linear_probe_recovers_first_eigenfunction() {
        let e = cos_error(2048);
        assert!(e <= 1e-8, "max error {e:e}");
        let ratio = cos_error(512) / cos_error(1023);
        assert!(ratio >= 15.0 * 0.8, "halving ratio {ratio}");
    }

    #[test]
    fn grid_basics() {
        let g = ThetaGrid::new(129).unwrap();
        assert_eq!(g.node(0), 0.0);
        assert_eq!(g.node(128), FRAC_PI_2);
        assert_eq!(g.refined().len(), 257);
        assert_eq!(g.nesting_factor(&g.refined_by(4)), Some(4));
        assert!(ThetaGrid::new(65).is_err());
    }

    #[test]
    fn sphere_integral_closed_forms() {
        let g = ThetaGrid::new(4096).unwrap();
        let one = RadialProfile::from_fn(g, |_| 1.0, |_| 0.0);
        assert!((sphere_integral(&one, 4, 0, |_| 1.0) - PI * PI).abs() < 1e-12);
        let phi = RadialProfile::from_fn(g, f64::cos, |t| -t.sin());
        assert!((sphere_integral(&phi, 4, 2, |_| 1.0) - PI * PI / 4.0).abs() < 1e-12);
    }

    #[test]
    fn sphere_integral_polynomials_in_cos() {
        // ∫ cos^k θ sin²θ dθ over (0, π/2) for k = 0..3, times |S²| = 4π.
        let exact = [PI / 4.0, 1.0 / 3.0, PI / 16.0, 2.0 / 15.0];
        for nodes in [4096usize, 4097] {
            let g = ThetaGrid::new(nodes).unwrap();
            let p = RadialProfile::from_fn(g, f64::cos, |t| -t.sin());
            for (k, e) in exact.iter().enumerate() {
                let got = sphere_integral(&p, 4, k as i32, |_| 1.0);
                assert!((got - 4.0 * PI * e).abs() < 1e-12, "k = {k}, nodes = {nodes}");
            }
        }
    }

    #[test]
    fn residual_of_exact_and_zero_profiles() {
        let p = params(4, 2.0, 3.0);
        let coarse = ThetaGrid::new(257).unwrap();
        let r1 = ode_residual_with(&RadialProfile::from_fn(coarse, f64::cos, |t| -t.sin()), &p, false);
        let fine = coarse.refined();
        let r2 = ode_residual_with(&RadialProfile::from_fn(fine, f64::cos, |t| -t.sin()), &p, false);
        let h = coarse.h();
        assert!(r1 <= 2.0 * h * h, "residual {r1:e}");
        assert!(r1 / r2 > 3.5);
        assert_eq!(ode_residual(&RadialProfile::zero(coarse), &params(4, 2.0, 0.0)), 0.0);
    }

    #[test]
    fn small_amplitude_stays_positive() {
        let g = ThetaGrid::new(2048).unwrap();
        let r = integrate_ivp(&params(4, 2.0, 0.0), 1e-3, &g).unwrap();
        assert!(r.first_zero.is_none() && !r.blowup && r.reached_end());
        assert!(r.v.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn large_amplitude_hits_zero_early() {
        let g = ThetaGrid::new(2048).unwrap();
        let r = integrate_ivp(&params(4, 2.0, 0.0), 1e3, &g).unwrap();
        let z = r.first_zero.expect("zero");
        assert!(z < FRAC_PI_2);
        let (i, j) = r.zero_bracket.unwrap();
        assert!(r.v[i] > 0.0 && r.v[j] <= 0.0);
        assert!(g.node(i) <= z && z <= g.node(j));
    }

    #[test]
    fn rejects_bad_amplitude() {
        let g = ThetaGrid::new(128).unwrap();
        assert!(integrate_ivp(&params(4, 2.0, 0.0), 0.0, &g).is_err());
        assert!(integrate_ivp(&params(4, 2.0, 0.0), f64::NAN, &g).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let g = ThetaGrid::new(70).unwrap();
        let p = RadialProfile::from_fn(g, |t| t.cos() * 1.5, |t| -1.5 * t.sin());
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"theta,v,dv\n"));
        let back = RadialProfile::read_csv(&buf[..]).unwrap();
        assert_eq!(back, p);
    }
}
