//! Crate-wide error type.
//!
//! Library operations return [`crate::Result`] with this error; the CLI maps
//! variants onto its documented exit codes (config errors, infeasibility,
//! objective/bridge failures).

use thiserror::Error;

/// Errors produced by model construction, evaluation, sampling, and the
/// external objective bridge.
#[derive(Debug, Error)]
pub enum Error {
    /// A success probability was outside `[0, 1]` or not finite.
    #[error("probability out of range at index {index}: {value} is not in [0, 1]")]
    ProbabilityOutOfRange {
        /// Position of the offending entry.
        index: usize,
        /// The offending value.
        value: f64,
    },

    /// An input vector had the wrong length.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch {
        /// Length required by the model or operation.
        expected: usize,
        /// Length actually supplied.
        actual: usize,
    },

    /// The requested constraint admits no feasible design.
    #[error("infeasible constraint: {reason}")]
    Infeasible {
        /// Human-readable description of the conflict.
        reason: String,
    },

    /// The operation is undefined at the supplied point (for example the
    /// log-gradient of a design with zero probability).
    #[error("domain error: {reason}")]
    Domain {
        /// Human-readable description of the violation.
        reason: String,
    },

    /// A pairwise quantity was requested with both indices equal.
    #[error("pair indices must differ (got i = j = {index})")]
    EqualPairIndices {
        /// The repeated index.
        index: usize,
    },

    /// A computation left the representable range and the result would be
    /// meaningless (reported instead of silently returning infinities).
    #[error("numerical overflow in {context}")]
    Overflow {
        /// What was being computed.
        context: String,
    },

    /// Exhaustive enumeration was requested above the supported cap.
    #[error("enumeration dimension {n} exceeds cap {cap}")]
    EnumerationCap {
        /// Requested dimension.
        n: usize,
        /// Maximum supported dimension.
        cap: usize,
    },

    /// A configuration value failed validation.
    #[error("invalid configuration: {reason}")]
    InvalidConfig {
        /// Which value and why.
        reason: String,
    },

    /// An objective evaluation failed for a non-protocol reason.
    #[error("objective evaluation failed: {reason}")]
    Objective {
        /// Underlying cause.
        reason: String,
    },

    /// The external worker broke the line protocol.
    #[error("bridge protocol violation: {detail}")]
    Protocol {
        /// The offending line or the framing problem.
        detail: String,
    },

    /// The external worker process exited or closed its pipes.
    #[error("bridge worker terminated: {detail}")]
    WorkerExited {
        /// What was observed (EOF, spawn failure, wait status).
        detail: String,
    },

    /// The external worker answered with a value that is not a finite real.
    #[error("bridge returned a non-finite value: {value_text}")]
    NonFiniteValue {
        /// The text the worker sent.
        value_text: String,
    },

    /// An I/O error from the bridge transport or artifact writing.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
