//! Error type shared by every module of the crate.

use thiserror::Error;

/// Failures reported by the library.
///
/// Each variant names the precondition or numerical event that was violated,
/// so callers can decide whether to retry with other inputs or abort.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// The sample size has a prime factor larger than the largest admissible prime.
    #[error("n = {n} is not admissible: prime factor {factor} exceeds p_upsilon = {p_upsilon}")]
    InadmissibleN { n: u64, factor: u64, p_upsilon: u64 },

    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The operation has no closed form for the requested mixing model.
    #[error("unsupported mixing model: {0}")]
    UnsupportedModel(String),

    /// A quantity that must be finite overflowed or diverged.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// No point of the search interval satisfies the fixed-point inequality.
    #[error("no solution on the search interval: {0}")]
    NoSolution(String),

    /// A monotonicity precondition failed when checked on a sample grid.
    #[error("monotonicity violation: {0}")]
    MonotonicityViolation(String),

    /// Array dimensions disagree.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// The iterative solver did not reach the requested optimality residual.
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    /// A linear system that must be solved exactly is singular.
    #[error("singular design: {0}")]
    SingularDesign(String),

    /// The analytic population distance is unavailable for this design or loss.
    #[error("unsupported design: {0}")]
    UnsupportedDesign(String),

    /// A Monte Carlo oracle is too noisy for the requested use.
    #[error("oracle variance too large: {0}")]
    OracleVariance(String),

    /// No grid point satisfies the ideal-set inequality.
    #[error("ideal set is empty")]
    EmptyIdealSet,

    /// No grid point passes the pairwise test at the given threshold.
    #[error("test set is empty (threshold s = {s})")]
    EmptyTestSet { s: f64 },

    /// Invalid experiment configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Too many Monte Carlo replications failed.
    #[error("aborted: {failures} of {reps} replications failed; first failure: {first}")]
    TooManyFailures { failures: usize, reps: usize, first: String },
}

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
