use thiserror::Error;

/// Process exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitCode {
    Success = 0,
    /// A self-test identity or a certificate failed.
    Failed = 1,
    /// A certificate exhausted its subdivision budget.
    Inconclusive = 2,
    /// Bad command line or configuration.
    Usage = 64,
    /// Unreadable or unusable input data.
    Data = 65,
    /// The evolution was aborted.
    Software = 70,
    /// Output could not be written.
    Io = 74,
}

impl ExitCode {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Error)]
#[error("{message}")]
pub struct CliError {
    pub code: ExitCode,
    pub message: String,
}

impl CliError {
    pub fn new(code: ExitCode, message: impl Into<String>) -> Self {
        CliError { code, message: message.into() }
    }

    pub fn config(e: oddpert_core::Error) -> Self {
        CliError::new(ExitCode::Usage, format!("config: {e}"))
    }

    pub fn io(what: &str, e: impl std::fmt::Display) -> Self {
        CliError::new(ExitCode::Io, format!("{what}: {e}"))
    }
}
