//! Command failure type carrying the process exit code.

use cbopt_core::Error;

/// A failed command: diagnostic message plus the exit code contract
/// (`2` config error, `3` infeasible, `4` objective/bridge failure).
#[derive(Debug)]
pub struct Failure {
    /// Process exit code.
    pub code: u8,
    /// Diagnostic printed to stderr.
    pub message: String,
}

impl Failure {
    /// Configuration or environment problem (exit code 2).
    pub fn config(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        let code = match &err {
            Error::Infeasible { .. } => 3,
            Error::Objective { .. }
            | Error::Protocol { .. }
            | Error::WorkerExited { .. }
            | Error::NonFiniteValue { .. }
            | Error::Io(_) => 4,
            _ => 2,
        };
        Failure {
            code,
            message: err.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(err: std::io::Error) -> Self {
        Failure::config(err.to_string())
    }
}
