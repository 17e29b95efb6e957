//! Crate-wide error type.

use thiserror::Error;

/// Errors produced anywhere in the forecasting stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed input data (bad row, duplicate id, non-numeric cell, ...).
    #[error("parse error at {location}: {reason}")]
    Parse { location: String, reason: String },

    /// Structurally valid input that violates a data contract.
    #[error("data error for `{subject}`: {reason}")]
    Data { subject: String, reason: String },

    /// Shape or length mismatch between two collections.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Training produced a non-finite loss or parameter.
    #[error("training diverged in group `{group}` at epoch {epoch}: {reason}")]
    Divergence {
        group: String,
        epoch: usize,
        reason: String,
    },

    /// A numeric routine could not proceed (singular matrix, all trials failed, ...).
    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn parse(location: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            reason: reason.into(),
        }
    }

    pub fn data(subject: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Data {
            subject: subject.into(),
            reason: reason.into(),
        }
    }
}
