use thiserror::Error;

/// Crate-wide error type. Variants carry enough context (line numbers, rank
/// positions, offending values) that a CLI user can act on the message alone.
#[derive(Debug, Error)]
pub enum PrsError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("model file error: {0}")]
    ModelFormat(String),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, PrsError>;

impl PrsError {
    pub fn parse(line: usize, message: impl Into<String>) -> Self {
        PrsError::Parse {
            line,
            message: message.into(),
        }
    }
}
