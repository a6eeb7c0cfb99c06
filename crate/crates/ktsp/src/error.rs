//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// The instance itself is malformed (too few points, k out of range,
    /// unreadable file, ...). CLI exit code 3.
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    /// An operation was called with arguments that violate its contract.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Input exceeds a hard cap of a desk-scale reference solver.
    #[error("oracle cap exceeded: {0}")]
    CapExceeded(String),

    /// The dynamic program found no tour at the current (truncated)
    /// parameter set. Not a bug: a denser portal/budget configuration may
    /// still succeed. CLI exit code 2.
    #[error("no tour found at current solver parameters: {0}")]
    Infeasible(String),

    /// An internal invariant failed; always indicates a bug. CLI exit code 4.
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code the CLI maps this error to.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Infeasible(_) => 2,
            Error::InvalidInstance(_) | Error::InvalidArgument(_) | Error::CapExceeded(_) => 3,
            Error::Internal(_) => 4,
        }
    }
}
