use ram_core::RamError;
use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Failure classes, each with its own process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

impl From<RamError> for CliError {
    fn from(e: RamError) -> Self {
        match e {
            RamError::Config(_) | RamError::Usage(_) | RamError::Dimension { .. } => {
                CliError::Config(e.to_string())
            }
            RamError::Input(_) | RamError::Parse { .. } | RamError::Validation(_) => {
                CliError::Data(e.to_string())
            }
            RamError::Environment(_) | RamError::Io { .. } => CliError::Runtime(e.to_string()),
        }
    }
}

/// Reading inputs: every failure (including missing files) is a data error.
pub(crate) fn reading(e: RamError) -> CliError {
    match e {
        RamError::Config(_) => CliError::Config(e.to_string()),
        _ => CliError::Data(e.to_string()),
    }
}
