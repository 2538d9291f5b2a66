use thiserror::Error;

/// Failure of a command, carrying the process exit code it maps to.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or bad input data. Exit code 1.
    #[error("{0}")]
    Validation(String),
    /// I/O or numerical failure while running. Exit code 2.
    #[error("{0}")]
    Runtime(String),
    /// A verification suite ran to completion but some checks failed. Exit code 3.
    #[error("{failed} of {total} checks failed")]
    VerifyFailed { failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::VerifyFailed { .. } => 3,
        }
    }
}

impl From<mondrian::Error> for CliError {
    fn from(e: mondrian::Error) -> Self {
        use mondrian::Error::*;
        match e {
            InvalidRate(_)
            | DegenerateBox
            | InvalidBox(_)
            | InvalidLifetime(_)
            | DimensionMismatch { .. }
            | InvalidDelta(_)
            | EmptyData
            | NonFinite { .. }
            | InvalidParams(_)
            | InsufficientSamples { .. }
            | InvalidArgument(_)
            | MalformedTree(_) => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
