//! Configuration-driven front end: ground states, penalized solves,
//! epsilon sweeps, verification re-runs and report aggregation.

pub mod config;
pub mod output;
pub mod pipeline;

use std::fmt;

/// Exit codes: 1 = a requested verification failed, 2 = bad configuration or
/// parameters, 3 = solver failure, 4 = I/O trouble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    VerificationFailed,
    Config,
    Solver,
    Io,
}

impl ExitKind {
    pub fn code(self) -> i32 {
        match self {
            ExitKind::VerificationFailed => 1,
            ExitKind::Config => 2,
            ExitKind::Solver => 3,
            ExitKind::Io => 4,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError { kind: ExitKind::Config, message: msg.into() }
    }

    pub fn io(msg: impl Into<String>) -> Self {
        CliError { kind: ExitKind::Io, message: msg.into() }
    }
}

impl From<nls_core::Error> for CliError {
    fn from(e: nls_core::Error) -> Self {
        use nls_core::Error as E;
        let kind = match &e {
            E::SolverFailure(_) | E::DegenerateSolution | E::NoMaximum(_) | E::PathInvalid(_) => {
                ExitKind::Solver
            }
            E::Io(_) => ExitKind::Io,
            _ => ExitKind::Config,
        };
        CliError { kind, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError { kind: ExitKind::Io, message: e.to_string() }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
