//! Errors of the command-line driver and their exit codes.

use std::path::Path;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// A pipeline module failed while running `stage`.
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: latsel::Error,
    },
    /// Bad arguments, configuration or input files.
    #[error("{0}")]
    Input(String),
    /// Output could not be written or failed its own consistency checks.
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Stage { source, .. } if source.is_input_error() => 2,
            CliError::Input(_) => 2,
            _ => 1,
        }
    }

    pub fn write(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Internal(format!("cannot write {}: {e}", path.display()))
    }
}

/// Tags a module error with the stage it came from.
pub trait StageContext<T> {
    fn stage(self, stage: &'static str) -> CliResult<T>;
}

impl<T> StageContext<T> for latsel::Result<T> {
    fn stage(self, stage: &'static str) -> CliResult<T> {
        self.map_err(|source| CliError::Stage { stage, source })
    }
}
