use bellsim::Error;
use thiserror::Error;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_MODEL: u8 = 3;
pub const EXIT_PARSE: u8 = 4;
pub const EXIT_EMPTY_CELL: u8 = 5;

#[derive(Debug, Error)]
#[error("{message}")]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    /// Wraps a library error, prefixing `context` (usually a file name).
    pub fn from_lib(context: &str, e: Error) -> Self {
        let code = match &e {
            Error::Parse { .. }
            | Error::NonMonotonicTimestamps { .. }
            | Error::UnsortedStream { .. }
            | Error::SettingConflict { .. }
            | Error::Csv(_) => EXIT_PARSE,
            Error::EmptyCell(_) | Error::MissingPair(_) | Error::DegenerateConditioning(_) => {
                EXIT_EMPTY_CELL
            }
            Error::InvalidModel(_)
            | Error::ModelFile(_)
            | Error::UnknownSetting { .. }
            | Error::SettingCount { .. }
            | Error::ConstructionInvalid(_)
            | Error::NonFiniteSpace => EXIT_MODEL,
            Error::InvalidSchedule(_) | Error::Coupling(_) | Error::Io(_) => EXIT_CONFIG,
        };
        let message = if context.is_empty() {
            e.to_string()
        } else {
            format!("{context}: {e}")
        };
        Self { code, message }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self::from_lib("", e)
    }
}

pub fn io_error(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::config(format!("{}: {e}", path.display()))
}
