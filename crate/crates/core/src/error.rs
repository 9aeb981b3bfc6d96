use thiserror::Error;

/// Errors surfaced by every stage of the pipeline.
///
/// Each variant maps onto one CLI exit code, see [`SlacError::exit_code`].
#[derive(Debug, Error)]
pub enum SlacError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("compatibility refusal: {0}")]
    Compatibility(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl SlacError {
    pub fn config(msg: impl Into<String>) -> Self {
        SlacError::Config(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        SlacError::Numerical(msg.into())
    }

    /// 0 success, 2 config error, 3 numerical failure, 4 compatibility refusal.
    pub fn exit_code(&self) -> i32 {
        match self {
            SlacError::Config(_) => 2,
            SlacError::Numerical(_) => 3,
            SlacError::Compatibility(_) | SlacError::Checkpoint(_) => 4,
            SlacError::Usage(_) | SlacError::Io(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, SlacError>;
