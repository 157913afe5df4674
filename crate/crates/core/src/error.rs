use std::path::PathBuf;

/// Errors produced anywhere in the scoring/evaluation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("usage: {0}")]
    Usage(String),
    /// Malformed file; `field` names the header or payload element at fault.
    #[error("malformed {format} file: field `{field}`: {reason}")]
    Format {
        format: &'static str,
        field: String,
        reason: String,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn format(format: &'static str, field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Format {
            format,
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 usage, 2 data/format, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::InvalidConfig(_) => 1,
            Error::InvalidInput(_)
            | Error::InvalidModel(_)
            | Error::UndefinedMetric(_)
            | Error::Format { .. }
            | Error::Io { .. } => 2,
            Error::NonFinite(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
