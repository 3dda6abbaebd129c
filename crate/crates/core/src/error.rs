use std::io;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error in section `{section}` at byte offset {offset}: {message}")]
    Parse {
        section: &'static str,
        offset: u64,
        message: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("invalid label {label} (must be < {k})")]
    Label { label: usize, k: usize },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(section: &'static str, offset: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            section,
            offset,
            message: message.into(),
        }
    }

    /// Whether the error stems from user input (configuration, files)
    /// rather than a runtime numerical failure.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Parse { .. } | Error::Json(_) | Error::Label { .. }
        )
    }
}
