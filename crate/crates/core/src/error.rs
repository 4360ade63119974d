use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = RamError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum RamError {
    /// Shapes or sizes that do not compose, bad hyper-parameters.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// Non-finite or out-of-domain input values.
    #[error("input error: {0}")]
    Input(String),

    /// API misuse (empty batch, prefix too long, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// The environment cannot satisfy a request (e.g. too few candidates).
    #[error("environment error: {0}")]
    Environment(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("log validation failed with {} error(s); first: {}", .0.len(), .0.first().map(String::as_str).unwrap_or(""))]
    Validation(Vec<String>),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RamError {
    pub(crate) fn dim(context: &'static str, expected: usize, got: usize) -> Self {
        RamError::Dimension {
            context,
            expected,
            got,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        RamError::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(RamError::dim(context, expected, got))
    }
}
