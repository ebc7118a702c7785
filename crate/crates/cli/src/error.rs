use thiserror::Error;

use embclass::Error as CoreError;

/// Process exit statuses. Stable: scripts depend on them.
pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_IO: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    /// Inputs were read but failed a check.
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => EXIT_IO,
            CliError::Invalid(_) => EXIT_INVALID,
            CliError::Core(e) => core_exit_code(e),
        }
    }
}

/// Unreadable inputs are I/O failures; everything else the engine rejects
/// (corrupt containers included) is a validation failure.
pub fn core_exit_code(e: &CoreError) -> i32 {
    match e {
        CoreError::Io { .. } | CoreError::Manifest { .. } | CoreError::Predictions { .. } => {
            EXIT_IO
        }
        _ => EXIT_INVALID,
    }
}

pub fn io_err(path: &std::path::Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}
