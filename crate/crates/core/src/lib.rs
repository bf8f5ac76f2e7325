//! Separable boundary-singularity profiles of `-Δu = u^q` near a boundary
//! point of a domain in R^N, N ≥ 4.
//!
//! * [`exponents`]: critical exponents q1 < q2 < q3, ℓ_{N,q}, the regime trichotomy.
//! * [`sphere_ode`]: the meridian ODE on the half sphere, quadrature, residuals.
//! * [`shooting`]: amplitude scans and bisection for the positive profile ω₀.
//! * [`identities`]: eigenfunction balance, Pohožaev and Kwong–Li identities.
//! * [`cylinder`]: the elliptic problem on the log-cylinder and its energy.
//! * [`cli`]: the `singprof` command line.

pub mod cli;
pub mod cylinder;
pub mod error;
pub mod exponents;
pub mod identities;
pub mod krylov;
pub mod numerics;
pub mod output;
pub mod shooting;
pub mod sphere_ode;

pub use error::{Error, Result};
pub use exponents::{ProblemParams, Regime};
pub use sphere_ode::{RadialProfile, ThetaGrid};
