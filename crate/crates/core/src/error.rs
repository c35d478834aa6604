use thiserror::Error;

#[derive(Debug, Error)]
pub enum LdfaError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("archive error: {0}")]
    Archive(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LdfaError>;

pub(crate) fn invalid(msg: impl Into<String>) -> LdfaError {
    LdfaError::InvalidArgument(msg.into())
}
