use std::path::PathBuf;

use thiserror::Error;
use usv_guidance::GuidanceError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Config(String),
    /// Failure while preparing a run (path or terminal-weight synthesis).
    #[error("setup failed: {0}")]
    Setup(#[from] GuidanceError),
    #[error("plant step {step}: {source}")]
    Step { step: usize, source: GuidanceError },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("trace has no records")]
    EmptyTrace,
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl SimError {
    /// Process exit status for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config(_) | SimError::Setup(_) => 2,
            SimError::Step { .. } => 3,
            SimError::Invariant(_) => 4,
            SimError::EmptyTrace | SimError::Io { .. } => 1,
        }
    }
}
