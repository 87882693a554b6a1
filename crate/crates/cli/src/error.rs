use std::path::PathBuf;

use thiserror::Error;

/// Failures that stop a run. Verdict failures are not errors: they produce
/// complete outputs and a nonzero exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error in {}: {message}", path.display())]
    Config { path: PathBuf, message: String },

    #[error(transparent)]
    Core(#[from] biharm_core::Error),

    #[error("cannot write {}: {source}", path.display())]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("thread pool: {0}")]
    Threads(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Core(_) | CliError::Threads(_) => 3,
            CliError::Output { .. } => 4,
        }
    }
}
