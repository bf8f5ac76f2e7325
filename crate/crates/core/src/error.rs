use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on (N, q, λ) or on an input profile was violated.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two profiles or a profile and a field do not share a θ grid.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("Kwong-Li weight constants not derived: {0}")]
    NotDerivedYet(String),

    /// An iterative solver stopped without meeting its tolerance.
    #[error("{solver} did not converge after {iterations} iterations (last residual {last_residual:e})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        last_residual: f64,
        history: Vec<f64>,
    },

    /// NaN or infinity escaped into a computation that must stay finite.
    #[error("numerical fault: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
