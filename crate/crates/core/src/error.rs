use std::io;
use thiserror::Error;

/// Error type shared by every module in this crate.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    /// Unsupported or malformed file contents (PNG color type, tensor magic, ...).
    #[error("format error: {0}")]
    Format(String),

    /// A precondition on an argument was violated (shape mismatch, bad range, ...).
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Configuration file or key/value problem. `line` is 0 when the value
    /// came from a command-line flag rather than a file.
    #[error("config error (line {line}): {message}")]
    Config { line: usize, message: String },

    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CoreError {
    pub fn argument(msg: impl Into<String>) -> Self {
        CoreError::Argument(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        CoreError::Format(msg.into())
    }

    pub fn config(line: usize, msg: impl Into<String>) -> Self {
        CoreError::Config {
            line,
            message: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
