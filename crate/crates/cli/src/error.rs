use thiserror::Error;

/// Command failures, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid configuration or input data.
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// Every sweep point was inconclusive.
    #[error("inconclusive: {0}")]
    Inconclusive(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Inconclusive(_) => 4,
        }
    }
}

impl From<ecodyn::Error> for CliError {
    fn from(e: ecodyn::Error) -> Self {
        match e {
            ecodyn::Error::Csv { .. } => CliError::Config(e.to_string()),
            ecodyn::Error::Io(_) => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}
