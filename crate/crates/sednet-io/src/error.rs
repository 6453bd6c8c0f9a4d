//! Error type for file formats and the CLI.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    /// Malformed file contents; messages carry byte offsets where useful.
    #[error("format error: {0}")]
    Format(String),
    #[error("version error: expected format version {expected}, found {found}")]
    Version { expected: u8, found: u8 },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] sednet_core::Error),
}

pub type Result<T> = std::result::Result<T, IoError>;
