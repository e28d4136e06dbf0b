use std::path::Path;

use thiserror::Error;

/// Errors produced by the clustering engine and its loaders.
#[derive(Debug, Error)]
pub enum KkmError {
    /// Bad arguments or data that violates an operation's preconditions.
    #[error("invalid input: {0}")]
    Input(String),

    /// Malformed file contents. `location` names a byte offset or a line.
    #[error("format error in {path} at {location}: {message}")]
    Format {
        path: String,
        location: String,
        message: String,
    },

    /// No configuration fits the memory budget.
    #[error("capacity exceeded: {message}")]
    Capacity {
        message: String,
        min_footprint_bytes: Option<u64>,
    },

    /// Internal invariant violation (all clusters empty, collective gap, ...).
    #[error("invariant violated: {0}")]
    State(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl KkmError {
    pub fn input(msg: impl Into<String>) -> Self {
        KkmError::Input(msg.into())
    }

    pub fn state(msg: impl Into<String>) -> Self {
        KkmError::State(msg.into())
    }

    pub fn format_at_offset(path: &Path, offset: usize, msg: impl Into<String>) -> Self {
        KkmError::Format {
            path: path.display().to_string(),
            location: format!("byte offset {offset}"),
            message: msg.into(),
        }
    }

    pub fn format_at_line(path: &Path, line: usize, msg: impl Into<String>) -> Self {
        KkmError::Format {
            path: path.display().to_string(),
            location: format!("line {line}"),
            message: msg.into(),
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        KkmError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Process exit code: 2 input/format, 3 capacity, 4 internal invariant.
    pub fn exit_code(&self) -> i32 {
        match self {
            KkmError::Input(_) | KkmError::Format { .. } | KkmError::Io { .. } => 2,
            KkmError::Capacity { .. } => 3,
            KkmError::State(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, KkmError>;
