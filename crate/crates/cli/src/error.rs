use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    /// Malformed or unreadable input data.
    #[error("{0}")]
    Data(String),

    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn io(path: &std::path::Path, err: io::Error) -> Self {
        CliError::Data(format!("{}: {err}", path.display()))
    }
}

impl From<lvmrs::Error> for CliError {
    fn from(e: lvmrs::Error) -> Self {
        match e {
            lvmrs::Error::Config(_) | lvmrs::Error::Domain(_) => CliError::Usage(e.to_string()),
            lvmrs::Error::Classifier { .. } => CliError::Data(e.to_string()),
            lvmrs::Error::NumericalConsistency(_) | lvmrs::Error::InfiniteQuantile(_) => {
                CliError::Numerical(e.to_string())
            }
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
