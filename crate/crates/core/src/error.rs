use std::io;

use thiserror::Error;

/// Errors produced across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: String, found: String },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("expected {expected} keypoints per person, found {found}")]
    KeypointCount { expected: usize, found: usize },

    #[error("bad tensor format: {0}")]
    Format(String),

    #[error("truncated stream: {0}")]
    Truncated(String),

    #[error("tensor shape {channels}x{height}x{width} overflows the addressable size")]
    ShapeOverflow { channels: u64, height: u64, width: u64 },

    #[error("optimization diverged at step {step}: {reason}")]
    Divergence { step: usize, reason: String },

    #[error("could not place person {person} after {attempts} attempts; try a larger canvas")]
    Placement { person: usize, attempts: usize },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    pub(crate) fn dimension(expected: impl ToString, found: impl ToString) -> Self {
        Error::Dimension {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}

/// Rejects values that are not finite and strictly positive.
pub(crate) fn ensure_positive(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::invalid(name, format!("must be finite and > 0, got {value}")))
    }
}
