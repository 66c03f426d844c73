use std::fmt;

/// Exit status for success.
pub const EXIT_OK: i32 = 0;
/// Exit status for data that loaded but failed a check.
pub const EXIT_VALIDATION: i32 = 1;
/// Exit status for I/O, format and usage failures.
pub const EXIT_IO: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(entseg::Error),
    Output(std::io::Error),
    /// One or more self-checks did not pass.
    ChecksFailed(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Output(_) => EXIT_IO,
            CliError::Core(entseg::Error::Config(_)) => EXIT_IO,
            CliError::Core(e) if e.is_validation() => EXIT_VALIDATION,
            CliError::Core(_) => EXIT_IO,
            CliError::ChecksFailed(_) => EXIT_VALIDATION,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Output(e) => write!(f, "output: {e}"),
            CliError::ChecksFailed(names) => write!(f, "failed checks: {}", names.join(", ")),
        }
    }
}

impl std::error::Error for CliError {}

impl From<entseg::Error> for CliError {
    fn from(e: entseg::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Output(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;
