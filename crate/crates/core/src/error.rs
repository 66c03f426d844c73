use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors produced by the toolkit.
///
/// Variants are grouped into two classes by [`Error::is_validation`]: data that
/// parsed but violates a contract (validation), and everything that failed
/// to load or decode (format / I/O).
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("mask is empty")]
    EmptyMask,

    #[error("image {image}: {message}")]
    Ingestion { image: String, message: String },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("prediction validation failed for entity {id}: {message}")]
    Validation { id: u32, message: String },

    #[error("image {image_id}: overlapping masks violate the non-overlap constraint ({message})")]
    Constraint { image_id: u64, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("kernel assignment error: {0}")]
    Assignment(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for contract violations on well-formed data (constraint, validation,
    /// integrity, domain, config, assignment, shape). False for load/decode failures.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Format(_) | Error::Io { .. } | Error::Json(_) | Error::Ingestion { .. }
        )
    }
}
