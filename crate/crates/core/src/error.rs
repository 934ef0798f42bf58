use std::path::PathBuf;

/// Errors produced by the toolkit.
///
/// Variants fall into three families that the command line maps onto exit
/// codes: I/O and parse failures, validation failures, and internal failures
/// (see [`Error::category`]).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("invalid value for `{key}`: {message}")]
    Validation { key: String, message: String },

    #[error("unknown class `{0}`")]
    UnknownClass(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("undefined statistic for class `{class}`: {message}")]
    UndefinedStatistic { class: String, message: String },

    #[error("corpus generation failed: {0}")]
    Generation(String),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Divergence { epoch: usize, loss: f64 },
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Parse,
    Validation,
    Internal,
}

impl Error {
    pub fn validation(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Io { .. } | Error::Parse { .. } => ErrorCategory::Parse,
            Error::Validation { .. }
            | Error::UnknownClass(_)
            | Error::Dimension(_)
            | Error::UndefinedStatistic { .. } => ErrorCategory::Validation,
            Error::Generation(_) | Error::Divergence { .. } => ErrorCategory::Internal,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
