use thiserror::Error;

/// Errors raised by the planning library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("start pose cannot be attached to the terrain")]
    StartUnprojectable,
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
