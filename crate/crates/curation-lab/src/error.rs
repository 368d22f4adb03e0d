//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by distribution construction, curation updates, model
/// fitting, attacks, and experiment parsing.
#[derive(Debug, Error)]
pub enum Error {
    /// Inputs violate a documented precondition (wrong length, value out of
    /// range, empty input, and so on).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A reward function cannot be evaluated on the given support.
    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    /// An exact computation would enumerate more tuples than the configured
    /// cap allows.
    #[error("enumeration too large: {0}")]
    EnumerationTooLarge(String),

    /// The optimizer produced a non-finite loss. Usually a sign that the
    /// learning rate is too large for the dataset's scale.
    #[error("optimizer diverged: {0}")]
    Divergence(String),

    /// The damped Hessian could not be factored.
    #[error("singular hessian: {0}")]
    SingularHessian(String),

    /// A flip targets a pair that cannot be flipped (tie label, bad index,
    /// or a mask built for a different dataset).
    #[error("invalid flip: {0}")]
    InvalidFlip(String),

    /// A retraining iteration failed; wraps the underlying error with the
    /// 1-based iteration that hit it.
    #[error("iteration {0} failed: {1}")]
    Iteration(usize, Box<Error>),

    /// An experiment spec failed validation. The message names the key.
    #[error("spec error: {0}")]
    Spec(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A malformed serialized artifact (dataset, mask, or table).
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
