use thiserror::Error;

#[derive(Debug, Error)]
pub enum TeleopError {
    #[error(transparent)]
    Core(#[from] sixbar_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("session log line {line}: {message}")]
    Log { line: usize, message: String },
}

pub type Result<T, E = TeleopError> = std::result::Result<T, E>;
