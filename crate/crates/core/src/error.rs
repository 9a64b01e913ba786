//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by graph construction, solvers, and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or matrix shapes are incompatible for the requested operation.
    #[error("shape mismatch at {context}: {detail}")]
    ShapeMismatch { context: String, detail: String },

    /// A non-finite value was found where one is not allowed.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// A named graph input was not bound or does not exist.
    #[error("unknown or unbound input `{0}`")]
    UnknownInput(String),

    /// An argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Geometry degenerated (for example a polyline with no extent).
    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    /// A linear solve failed (singular or indefinite system).
    #[error("linear solve failed: {0}")]
    Singular(String),

    /// A solver produced a non-finite cost or state.
    #[error("solver diverged: {0}")]
    SolverDiverged(String),

    /// File contents did not match the expected format.
    #[error("format error in {path}: {detail}")]
    Format { path: String, detail: String },

    /// Required sidecar metadata is missing.
    #[error("missing metadata: {0}")]
    MissingMetadata(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn shape(context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            context: context.into(),
            detail: detail.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
