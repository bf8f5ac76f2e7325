//! Shooting over the pole amplitude for the two-point problem
//! `v'(0) = 0, v(π/2) = 0`.
//!
//! Each shot `a ↦ v(·; a)` is classified by its first zero θ*(a). The event
//! function `e(a) = θ*(a) − π/2` is taken as +∞ for shots that stay positive up
//! to π/2. A positive solution sits at a sign change of `e`; the scan looks
//! for those on a logarithmic amplitude grid and bisects each one.
//!
//! Shots that exceed the blowup threshold carry no information about θ*: the
//! true solution of the meridian equation cannot blow up on [0, π/2] (v is
//! bounded by its amplitude while positive), so the threshold only reflects
//! the range of double precision at very large amplitudes. They are logged
//! and skipped when bracketing.
//!
//! `NonexistenceCertified` means no sign change was seen over the configured
//! range and resolution. It is a numerical certificate, not a proof.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponents::{classify_regime, ell, ProblemParams, Regime};
use crate::sphere_ode::{integrate_ivp_with, IvpOptions, RadialProfile, ShotEvent, ThetaGrid, DEFAULT_NODES};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShootingConfig {
    pub scan_min: f64,
    pub scan_max: f64,
    pub samples: usize,
    /// Required |v(π/2; a*)|.
    pub tol: f64,
    /// Required bracket width relative to a*.
    pub bracket_rel: f64,
    pub max_bisections: usize,
    /// Grid for bisection and the returned profile.
    pub nodes: usize,
    /// Coarser grid used only to classify scan shots.
    pub scan_nodes: usize,
    pub ivp: IvpOptions,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        Self {
            scan_min: 1e-4,
            scan_max: 1e4,
            samples: 400,
            tol: 1e-8,
            bracket_rel: 1e-10,
            max_bisections: 200,
            nodes: DEFAULT_NODES,
            scan_nodes: 1025,
            ivp: IvpOptions::default(),
        }
    }
}

impl ShootingConfig {
    pub fn grid(&self) -> Result<ThetaGrid> {
        ThetaGrid::new(self.nodes)
    }

    fn validate(&self) -> Result<()> {
        if !(self.scan_min > 0.0 && self.scan_max > self.scan_min && self.scan_max.is_finite()) {
            return Err(Error::domain(format!(
                "scan range must satisfy 0 < min < max, got [{}, {}]",
                self.scan_min, self.scan_max
            )));
        }
        if self.samples < 2 {
            return Err(Error::domain("amplitude scan needs at least two samples"));
        }
        if !(self.tol > 0.0 && self.bracket_rel > 0.0) {
            return Err(Error::domain("tolerances must be positive"));
        }
        Ok(())
    }

    /// Logarithmically spaced scan amplitudes, endpoints included.
    pub fn amplitudes(&self) -> Vec<f64> {
        let (lo, hi) = (self.scan_min.ln(), self.scan_max.ln());
        let m = (self.samples - 1) as f64;
        (0..self.samples)
            .map(|k| match k {
                0 => self.scan_min,
                k if k + 1 == self.samples => self.scan_max,
                k => (lo + (hi - lo) * k as f64 / m).exp(),
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShootingStatus {
    Solution,
    NonexistenceCertified,
    Inconclusive,
}

impl ShootingStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ShootingStatus::Solution => "Solution",
            ShootingStatus::NonexistenceCertified => "NonexistenceCertified",
            ShootingStatus::Inconclusive => "Inconclusive",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub amplitude: f64,
    pub event: ShotEvent,
}

impl ScanRecord {
    /// Sign of e(a): `Some(true)` for +∞ (no zero), `Some(false)` for a zero
    /// at or before π/2, `None` for blowup.
    fn positive(&self) -> Option<bool> {
        match self.event {
            ShotEvent::NoZero => Some(true),
            ShotEvent::Zero(_) => Some(false),
            ShotEvent::Blowup(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShootingOutcome {
    pub status: ShootingStatus,
    #[serde(serialize_with = "crate::output::opt_real")]
    pub amplitude: Option<f64>,
    #[serde(skip)]
    pub profile: Option<RadialProfile>,
    /// |v(π/2)| of the returned profile, or NaN without one.
    #[serde(serialize_with = "crate::output::real")]
    pub boundary_residual: f64,
    #[serde(serialize_with = "crate::output::opt_real")]
    pub bracket_width: Option<f64>,
    pub scan_log: Vec<ScanRecord>,
    pub diagnostic: Option<String>,
}

impl ShootingOutcome {
    fn without_solution(status: ShootingStatus, scan_log: Vec<ScanRecord>, diagnostic: Option<String>) -> Self {
        Self {
            status,
            amplitude: None,
            profile: None,
            boundary_residual: f64::NAN,
            bracket_width: None,
            scan_log,
            diagnostic,
        }
    }
}

/// Shoots every scan amplitude (in parallel) and returns the log sorted by
/// amplitude.
pub fn scan_amplitudes(params: &ProblemParams, cfg: &ShootingConfig) -> Result<Vec<ScanRecord>> {
    cfg.validate()?;
    let grid = ThetaGrid::new(cfg.scan_nodes)?;
    let mut log = cfg
        .amplitudes()
        .into_par_iter()
        .map(|a| shoot(params, a, &grid, &cfg.ivp).map(|event| ScanRecord { amplitude: a, event }))
        .collect::<Result<Vec<_>>>()?;
    log.sort_by(|x, y| x.amplitude.total_cmp(&y.amplitude));
    Ok(log)
}

fn shoot(params: &ProblemParams, a: f64, grid: &ThetaGrid, ivp: &IvpOptions) -> Result<ShotEvent> {
    Ok(integrate_ivp_with(params, a, grid, ivp)?.event())
}

/// Adjacent informative scan entries whose event signs differ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bracket {
    /// Amplitude whose shot stays positive up to π/2.
    pub positive: f64,
    /// Amplitude whose shot vanishes before π/2.
    pub vanishing: f64,
}

pub fn brackets(log: &[ScanRecord]) -> Vec<Bracket> {
    let informative: Vec<(f64, bool)> = log
        .iter()
        .filter_map(|r| r.positive().map(|p| (r.amplitude, p)))
        .collect();
    informative
        .windows(2)
        .filter(|w| w[0].1 != w[1].1)
        .map(|w| {
            if w[0].1 {
                Bracket {
                    positive: w[0].0,
                    vanishing: w[1].0,
                }
            } else {
                Bracket {
                    positive: w[1].0,
                    vanishing: w[0].0,
                }
            }
        })
        .collect()
}

/// Result of bisecting one bracket.
#[derive(Clone, Debug)]
pub struct Refined {
    pub amplitude: f64,
    pub width: f64,
    pub profile: RadialProfile,
    pub boundary_residual: f64,
}

/// Bisects a bracket until its width is at most `bracket_rel · a*` and the
/// positive end satisfies |v(π/2)| ≤ tol. `Ok(Err(reason))` when a midpoint blows up
/// or the tolerance is not reachable at double precision.
pub fn refine_bracket(
    params: &ProblemParams,
    bracket: Bracket,
    cfg: &ShootingConfig,
) -> Result<std::result::Result<Refined, String>> {
    let grid = cfg.grid()?;
    let (mut pos, mut van) = (bracket.positive, bracket.vanishing);
    let first = integrate_ivp_with(params, pos, &grid, &cfg.ivp)?;
    let mut pos_boundary = match first.event() {
        ShotEvent::NoZero => first.v.last().copied().unwrap_or(f64::NAN),
        other => return Ok(Err(format!("bracket end {pos} is not positive: {other:?}"))),
    };
    for _ in 0..cfg.max_bisections {
        let width = (pos - van).abs();
        if width <= cfg.bracket_rel * pos && pos_boundary.abs() <= cfg.tol {
            break;
        }
        let mid = 0.5 * (pos + van);
        if mid == pos || mid == van {
            break;
        }
        let r = integrate_ivp_with(params, mid, &grid, &cfg.ivp)?;
        match r.event() {
            ShotEvent::NoZero => {
                pos = mid;
                pos_boundary = *r.v.last().unwrap();
            }
            ShotEvent::Zero(_) => van = mid,
            ShotEvent::Blowup(t) => return Ok(Err(format!("blowup at θ = {t} inside bracket, amplitude {mid}"))),
        }
    }
    let width = (pos - van).abs();
    if pos_boundary.abs() > cfg.tol || width > cfg.bracket_rel * pos {
        return Ok(Err(format!(
            "bisection stalled at a = {pos}: |v(pi/2)| = {:e}, width = {width:e}",
            pos_boundary.abs()
        )));
    }
    let full = integrate_ivp_with(
        params,
        pos,
        &grid,
        &IvpOptions {
            stop_at_zero: false,
            ..cfg.ivp.clone()
        },
    )?;
    let profile = full
        .into_profile()
        .ok_or_else(|| Error::Numerical(format!("re-integration at a* = {pos} did not reach π/2")))?;
    let boundary_residual = profile.boundary_value().abs();
    Ok(Ok(Refined {
        amplitude: pos,
        width,
        profile,
        boundary_residual,
    }))
}

pub fn solve_positive(params: &ProblemParams, cfg: &ShootingConfig) -> Result<ShootingOutcome> {
    let log = scan_amplitudes(params, cfg)?;
    if log.iter().all(|r| r.positive().is_none()) {
        return Ok(ShootingOutcome::without_solution(
            ShootingStatus::Inconclusive,
            log,
            Some("every shot in the scan blew up".into()),
        ));
    }
    let found = brackets(&log);
    match found.as_slice() {
        [] => Ok(ShootingOutcome::without_solution(
            ShootingStatus::NonexistenceCertified,
            log,
            None,
        )),
        [b] => match refine_bracket(params, *b, cfg)? {
            Ok(r) => Ok(ShootingOutcome {
                status: ShootingStatus::Solution,
                amplitude: Some(r.amplitude),
                boundary_residual: r.boundary_residual,
                bracket_width: Some(r.width),
                profile: Some(r.profile),
                scan_log: log,
                diagnostic: None,
            }),
            Err(msg) => Ok(ShootingOutcome::without_solution(
                ShootingStatus::Inconclusive,
                log,
                Some(msg),
            )),
        },
        many => {
            let at: Vec<String> = many
                .iter()
                .map(|b| format!("[{:e}, {:e}]", b.positive.min(b.vanishing), b.positive.max(b.vanishing)))
                .collect();
            Ok(ShootingOutcome::without_solution(
                ShootingStatus::Inconclusive,
                log,
                Some(format!(
                    "event function changes sign {} times: {}",
                    many.len(),
                    at.join(", ")
                )),
            ))
        }
    }
}

/// The positive solution ω₀ of the separable-profile equation (λ = ℓ_{N,q}).
pub fn omega0(dim: u32, q: f64) -> Result<RadialProfile> {
    omega0_with(dim, q, &ShootingConfig::default())
}

pub fn omega0_with(dim: u32, q: f64, cfg: &ShootingConfig) -> Result<RadialProfile> {
    let regime = classify_regime(dim, q)?;
    if regime != Regime::UniqueSolution {
        return Err(Error::domain(format!(
            "no positive separable profile for N = {dim}, q = {q} ({regime})"
        )));
    }
    let params = ProblemParams::with_ell(dim, q)?;
    let out = solve_positive(&params, cfg)?;
    match (out.status, out.profile) {
        (ShootingStatus::Solution, Some(p)) => Ok(p),
        (status, _) => Err(Error::Numerical(format!(
            "shooting returned {} for N = {dim}, q = {q} inside the existence range; diagnostic: {}",
            status.as_str(),
            out.diagnostic.unwrap_or_default()
        ))),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MultiplicityReport {
    pub count: usize,
    pub amplitudes: Vec<f64>,
    pub brackets: usize,
    pub inconclusive: Vec<String>,
}

/// Counts distinct positive solutions found over the scan.
///
/// Every bracket is bisected; two limits count once when their amplitudes
/// agree to 1e-8 (relative) or their profiles agree to 1e-6 in max norm.
pub fn multiplicity_probe(params: &ProblemParams, cfg: &ShootingConfig) -> Result<MultiplicityReport> {
    let log = scan_amplitudes(params, cfg)?;
    let found = brackets(&log);
    let refined = found
        .par_iter()
        .map(|b| refine_bracket(params, *b, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut distinct: Vec<Refined> = Vec::new();
    let mut inconclusive = Vec::new();
    for r in refined {
        match r {
            Ok(r) => {
                let duplicate = distinct.iter().any(|d| {
                    (d.amplitude - r.amplitude).abs() <= 1e-8 * d.amplitude.max(r.amplitude)
                        || d.profile.max_abs_diff(&r.profile).map(|x| x <= 1e-6).unwrap_or(false)
                });
                if !duplicate {
                    distinct.push(r);
                }
            }
            Err(msg) => inconclusive.push(msg),
        }
    }
    Ok(MultiplicityReport {
        count: distinct.len(),
        amplitudes: distinct.iter().map(|d| d.amplitude).collect(),
        brackets: found.len(),
        inconclusive,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum LambdaRule {
    /// λ = ℓ_{N,q}.
    Ell,
    Fixed(f64),
}

impl LambdaRule {
    pub fn lambda(&self, dim: u32, q: f64) -> Result<f64> {
        match *self {
            LambdaRule::Ell => ell(dim, q),
            LambdaRule::Fixed(l) => Ok(l),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExistenceRow {
    pub q: f64,
    #[serde(serialize_with = "crate::output::real")]
    pub lambda: f64,
    pub regime: Option<Regime>,
    pub status: Option<ShootingStatus>,
    #[serde(serialize_with = "crate::output::opt_real")]
    pub amplitude: Option<f64>,
    #[serde(serialize_with = "crate::output::opt_real")]
    pub residual: Option<f64>,
    pub error: Option<String>,
}

/// One shooting solve per exponent; a failing row records its error and the
/// scan moves on.
pub fn existence_scan(dim: u32, q_grid: &[f64], rule: LambdaRule, cfg: &ShootingConfig) -> Vec<ExistenceRow> {
    q_grid
        .par_iter()
        .map(|&q| {
            let mut row = ExistenceRow {
                q,
                lambda: f64::NAN,
                regime: None,
                status: None,
                amplitude: None,
                residual: None,
                error: None,
            };
            let mut run = || -> Result<()> {
                row.regime = Some(classify_regime(dim, q)?);
                row.lambda = rule.lambda(dim, q)?;
                let params = ProblemParams::new(dim, q, row.lambda)?;
                let out = solve_positive(&params, cfg)?;
                row.status = Some(out.status);
                row.amplitude = out.amplitude;
                row.residual = out.amplitude.map(|_| out.boundary_residual);
                if out.status == ShootingStatus::Inconclusive {
                    row.error = out.diagnostic;
                }
                Ok(())
            };
            if let Err(e) = run() {
                row.error = Some(e.to_string());
            }
            row
        })
        .collect()
}

/// Expected status for λ = ℓ_{N,q}.
pub fn predicted_status(regime: Regime) -> ShootingStatus {
    if regime.admits_solution() {
        ShootingStatus::Solution
    } else {
        ShootingStatus::NonexistenceCertified
    }
}
