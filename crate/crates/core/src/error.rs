use thiserror::Error;

/// Errors raised by the flow library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not positive definite (Cholesky factorization failed)")]
    NotPositiveDefinite,

    #[error("matrix is not symmetric (asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite entry in {0}")]
    NonFiniteInput(&'static str),

    #[error("pseudo-time {0} lies outside [0, 1]")]
    LambdaOutOfRange(f64),

    #[error("point set is empty")]
    EmptyPointSet,

    #[error("need at least 2 particles, got {0}")]
    TooFewParticles(usize),

    #[error("non-finite particle state at lambda = {lambda}")]
    NonFiniteState { lambda: f64 },

    #[error("step {step:e} at lambda = {lambda} is below the minimum bound {min_step:e}")]
    StepBoundViolation {
        lambda: f64,
        step: f64,
        min_step: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
