//! Error type shared by every module of the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or out-of-contract input (shape mismatch, non-finite
    /// entries, out-of-range step index, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A QR factorization met a (numerically) rank-deficient column.
    #[error("rank-deficient input at column {column}")]
    RankDeficient { column: usize },

    /// A linear solve was rejected because the condition estimate exceeds
    /// the configured maximum.
    #[error("ill-conditioned solve, condition estimate {estimate:.3e}")]
    IllConditioned { estimate: f64 },

    /// Random operator generation kept producing near-singular candidates.
    #[error("operator generation failed at step {step}: {reason}")]
    GenerationFailure { step: usize, reason: String },

    /// A recursion produced non-finite values or exceeded its guard bound.
    #[error("numerical blowup at step {step}: {what}")]
    NumericalBlowup { step: usize, what: String },

    /// The innovation covariance lost positive definiteness.
    #[error("innovation covariance not positive-definite at step {step}")]
    DegenerateInnovation { step: usize },

    /// A dense-product quantity was requested beyond the window where the
    /// dense route is trustworthy.
    #[error("step {requested} outside the validated dense-product range (max {max})")]
    OutOfValidatedRange { requested: usize, max: usize },

    /// An oracle-style check was invoked on inputs that do not satisfy its
    /// hypothesis; distinct from the check returning `false`.
    #[error("hypothesis not satisfied: {0}")]
    HypothesisFailed(String),

    /// An eigenvalue magnitude sits too close to the requested splitting
    /// radius for a stable invariant-subspace computation.
    #[error("eigenvalue magnitude within {gap:.3e} of the split radius {alpha}")]
    SpectralGapViolation { alpha: f64, gap: f64 },
}
