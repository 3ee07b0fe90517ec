use itr_core::pipeline::{Stage, StageFailure};
use itr_core::Error;

/// A failure plus the process exit code it maps to: 2 for bad input or
/// configuration, 1 for runtime/numerical trouble with well-formed input.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: message.into(),
        }
    }
}

pub fn exit_code_for(error: &Error) -> i32 {
    match error {
        Error::Invalid(_) | Error::Io(_) | Error::Csv(_) | Error::Json(_) => 2,
        Error::Numerical(_) | Error::Infeasible(_) => 1,
    }
}

impl From<Error> for CliError {
    fn from(error: Error) -> Self {
        CliError {
            code: exit_code_for(&error),
            message: error.to_string(),
        }
    }
}

impl From<StageFailure> for CliError {
    fn from(failure: StageFailure) -> Self {
        // Validation rejects malformed input (exit 2); later stages fail on
        // data that was well-formed but uncooperative (exit 1).
        let code = if failure.stage == Stage::Validate { 2 } else { 1 };
        CliError {
            code,
            message: failure.to_string(),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
