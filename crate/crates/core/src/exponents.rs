//! Critical exponents, the angular coefficient ℓ_{N,q}, the cylinder damping
//! coefficient and the existence trichotomy for separable profiles.
//!
//! For `-Δu = u^q` near a boundary point of a domain in R^N the relevant
//! thresholds are
//!
//! ```text
//! q1 = (N+1)/(N-1)   q2 = (N+2)/(N-2)   q3 = (N+1)/(N-3)
//! ```
//!
//! and a separable solution `r^{-2/(q-1)} ω(σ)` has an angular part solving
//! `-Δ'ω = ℓ_{N,q} ω + ω^q` on the upper half sphere.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimension, exponent and spectral parameter shared by every solver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    pub dim: u32,
    pub q: f64,
    pub lambda: f64,
}

impl ProblemParams {
    pub fn new(dim: u32, q: f64, lambda: f64) -> Result<Self> {
        check_dim(dim)?;
        check_exponent(q)?;
        if !lambda.is_finite() {
            return Err(Error::domain(format!("lambda must be finite, got {lambda}")));
        }
        Ok(Self { dim, q, lambda })
    }

    /// Parameters with λ = ℓ_{N,q}, the separable-profile equation.
    pub fn with_ell(dim: u32, q: f64) -> Result<Self> {
        Self::new(dim, q, ell(dim, q)?)
    }

    /// First Dirichlet eigenvalue of -Δ' on the half sphere, λ1 = N-1.
    pub fn lambda1(&self) -> f64 {
        f64::from(self.dim - 1)
    }

    /// Exponent of sin θ in the axisymmetric surface measure, N-2.
    pub fn weight_exponent(&self) -> i32 {
        self.dim as i32 - 2
    }
}

pub(crate) fn check_dim(dim: u32) -> Result<()> {
    if dim < 4 {
        return Err(Error::domain(format!("dimension must be at least 4, got {dim}")));
    }
    Ok(())
}

pub(crate) fn check_exponent(q: f64) -> Result<()> {
    if !(q.is_finite() && q > 1.0) {
        return Err(Error::domain(format!("exponent must satisfy q > 1, got {q}")));
    }
    Ok(())
}

/// The three critical exponents, held exactly.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CriticalSet {
    pub q1: Ratio<i64>,
    pub q2: Ratio<i64>,
    pub q3: Ratio<i64>,
}

impl CriticalSet {
    pub fn q1_f64(&self) -> f64 {
        ratio_to_f64(self.q1)
    }

    pub fn q2_f64(&self) -> f64 {
        ratio_to_f64(self.q2)
    }

    pub fn q3_f64(&self) -> f64 {
        ratio_to_f64(self.q3)
    }
}

pub fn ratio_to_f64(r: Ratio<i64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

pub fn critical_exponents(dim: u32) -> Result<CriticalSet> {
    check_dim(dim)?;
    let n = i64::from(dim);
    Ok(CriticalSet {
        q1: Ratio::new(n + 1, n - 1),
        q2: Ratio::new(n + 2, n - 2),
        q3: Ratio::new(n + 1, n - 3),
    })
}

/// ℓ_{N,q} = 2(N - q(N-2)) / (q-1)^2.
pub fn ell(dim: u32, q: f64) -> Result<f64> {
    check_dim(dim)?;
    check_exponent(q)?;
    let n = f64::from(dim);
    Ok(2.0 * (n - q * (n - 2.0)) / ((q - 1.0) * (q - 1.0)))
}

/// Coefficient β = N - 2(q+1)/(q-1) of the first-order term on the
/// log-cylinder. It vanishes exactly at q = q2.
pub fn damping_coefficient(dim: u32, q: f64) -> Result<f64> {
    check_dim(dim)?;
    check_exponent(q)?;
    let n = f64::from(dim);
    // (N(q-1) - 2(q+1)) / (q-1) keeps the q2 cancellation exact in the numerator.
    Ok((n * (q - 1.0) - 2.0 * (q + 1.0)) / (q - 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    SubcriticalNoSolution,
    UniqueSolution,
    SupercriticalNoSolution,
}

impl Regime {
    pub fn admits_solution(self) -> bool {
        matches!(self, Regime::UniqueSolution)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::SubcriticalNoSolution => "SubcriticalNoSolution",
            Regime::UniqueSolution => "UniqueSolution",
            Regime::SupercriticalNoSolution => "SupercriticalNoSolution",
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Classifies a real exponent with strict floating comparisons against the
/// rounded thresholds. `q == q1` and `q == q3` map to the no-solution tags.
pub fn classify_regime(dim: u32, q: f64) -> Result<Regime> {
    let crit = critical_exponents(dim)?;
    check_exponent(q)?;
    Ok(if q <= crit.q1_f64() {
        Regime::SubcriticalNoSolution
    } else if q < crit.q3_f64() {
        Regime::UniqueSolution
    } else {
        Regime::SupercriticalNoSolution
    })
}

/// Exact classification for rational exponents.
pub fn classify_regime_exact(dim: u32, q: Ratio<i64>) -> Result<Regime> {
    let crit = critical_exponents(dim)?;
    if q <= Ratio::from_integer(1) {
        return Err(Error::domain(format!("exponent must satisfy q > 1, got {q}")));
    }
    Ok(if q <= crit.q1 {
        Regime::SubcriticalNoSolution
    } else if q < crit.q3 {
        Regime::UniqueSolution
    } else {
        Regime::SupercriticalNoSolution
    })
}
