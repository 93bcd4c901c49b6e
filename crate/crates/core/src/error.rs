use thiserror::Error;

/// Errors raised by the solver and the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("reward requested for an empty location (n = 0)")]
    EmptyLocation,

    #[error("truncation nmax = {nmax} is too small (need at least {required})")]
    TruncationTooSmall { nmax: usize, required: usize },

    #[error("stationary solve failed: {0}")]
    SingularGenerator(String),

    #[error("kappa bracket [{lo}, {hi}] does not straddle beta = {beta} (mean occupancy {mean_lo} .. {mean_hi})")]
    BracketFailure {
        lo: f64,
        hi: f64,
        beta: f64,
        mean_lo: f64,
        mean_hi: f64,
    },

    #[error("value iteration did not converge after {iterations} sweeps (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("continuation value is not monotone in n at z = {z}, n = {n} (increase {increase:e})")]
    NonMonotone { z: usize, n: usize, increase: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
