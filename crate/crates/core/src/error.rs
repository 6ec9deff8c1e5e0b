use std::io;

use thiserror::Error;

/// Errors produced anywhere in the codec.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("zero probability for symbol {symbol} (mean {mean}, scale {scale})")]
    ZeroProbability { symbol: i64, mean: f64, scale: f64 },

    #[error("corrupt stream at byte {position}: {reason}")]
    Corrupt { position: usize, reason: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn corrupt(position: usize, reason: impl Into<String>) -> Self {
        Error::Corrupt {
            position,
            reason: reason.into(),
        }
    }

    /// True for failures caused by numerical breakdown rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite(_) | Error::ZeroProbability { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
