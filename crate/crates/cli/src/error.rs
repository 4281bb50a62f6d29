use thiserror::Error;
use wendy::WendyError;

pub const EXIT_NUMERICAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Wendy(#[from] WendyError),

    #[error("{0}")]
    Output(String),
}

impl CliError {
    /// Bad input is a usage error; anything the numerics reject exits with 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Wendy(e) => match e {
                WendyError::UnknownModel { .. }
                | WendyError::Config(_)
                | WendyError::Io(_)
                | WendyError::Dimension(_)
                | WendyError::InvalidModel(_) => EXIT_USAGE,
                _ => EXIT_NUMERICAL,
            },
            CliError::Output(_) => EXIT_NUMERICAL,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Wendy(e) => e.kind(),
            CliError::Output(_) => "output",
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}
