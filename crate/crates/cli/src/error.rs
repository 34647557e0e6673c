use std::path::PathBuf;
use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const BOUNDED: i32 = 0;
    pub const DIVERGED: i32 = 10;
    pub const INCONCLUSIVE: i32 = 20;
    pub const USAGE: i32 = 64;
    pub const DATA: i32 = 65;
    pub const INTERNAL: i32 = 70;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    /// Malformed document or a field of the wrong shape.
    #[error("scenario schema: {0}")]
    Schema(String),
    /// Well-formed document whose values break an invariant.
    #[error("scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Jsr(#[from] powerjsr::jsr::JsrError),
    #[error(transparent)]
    Simulation(#[from] powerjsr::switching::SimError),
    #[error(transparent)]
    Power(#[from] powerjsr::power::PowerError),
    #[error("replay mismatch: {0}")]
    Replay(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Schema(_)
            | CliError::Invalid(_)
            | CliError::Jsr(_)
            | CliError::Simulation(_)
            | CliError::Power(_)
            | CliError::Replay(_) => exit::DATA,
            CliError::Io { .. } | CliError::Internal(_) => exit::INTERNAL,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}
