use mfgc_core::MfgError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] MfgError),
    #[error("cannot write {path}: {source}")]
    Write { path: String, source: std::io::Error },
}

impl CliError {
    /// Process exit status: 2 for bad input, 4 for a missing solution, 1
    /// for anything that went wrong while running.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                MfgError::MissingInput(_) => 4,
                MfgError::UnknownModel(_)
                | MfgError::InvalidParameter(_)
                | MfgError::InvalidGrid(_)
                | MfgError::InsufficientRepetitions(_)
                | MfgError::Stability { .. }
                | MfgError::Truncation(_) => 2,
                _ => 1,
            },
            CliError::Write { .. } => 1,
        }
    }
}
