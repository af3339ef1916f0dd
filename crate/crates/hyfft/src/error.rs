use thiserror::Error;

/// Errors raised by planning, simulation and verification.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// The simulated output is not a bit-dimension permutation of the reference.
    #[error("output order mismatch: {0}")]
    OrderMismatch(String),

    /// An argument is outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The requested mode cannot handle this transform size.
    #[error("mode {mode} does not support N = {len}: {reason}")]
    ModeUnsupported {
        mode: &'static str,
        len: u64,
        reason: String,
    },

    /// Inconsistent configuration (bad radix, parallelism, input length ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// A bank was overwritten before being read, or read before being written.
    #[error("memory conflict at cycle {cycle}: bank {bank} address {address}: {detail}")]
    Conflict {
        cycle: u64,
        bank: usize,
        address: u64,
        detail: String,
    },

    /// Output differs from the reference by more than the tolerance.
    #[error("numeric mismatch at frequency {index}: |error| = {error:e} exceeds {tolerance:e}")]
    Numeric {
        index: usize,
        error: f64,
        tolerance: f64,
    },

    /// No reshuffle sequence exists within the allowed number of steps.
    #[error("no sigma3 sequence of at most {max_steps} steps")]
    SearchFailure { max_steps: usize },

    /// The probe signal does not identify a unique output ordering.
    #[error("ambiguous output ordering: {0}; use a different probe")]
    NeedsNewProbe(String),

    /// A simulation invariant was broken; this is a bug.
    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
