//! Cycle-level functional model of a hybrid radix-2^k FFT processor built
//! from multi-path delay commutator (MDC) units and banked memories.
//!
//! The processor runs either as a pipeline (one MDC unit per stage, streaming
//! batches between neighbouring bank sets) or memory-based (the same MDC row
//! iterated over all stages, writing results back in place).

pub mod banks;
pub mod bitperm;
pub mod cli;
pub mod error;
pub mod mdc;
pub mod oracle;
pub mod processor;

pub use error::{Error, Result};
pub use mdc::ComplexSample;
pub use processor::{Mode, PlanConfig};
