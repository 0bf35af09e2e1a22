use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the landmarking pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {format} data: {reason}")]
    Format { format: &'static str, reason: String },
    #[error("face {face} references vertex {index} but mesh has {count} vertices")]
    FaceIndex {
        face: usize,
        index: usize,
        count: usize,
    },
    #[error("mesh has zero total surface area")]
    ZeroArea,
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("region of interest contains no points")]
    EmptyRoi,
    #[error("requested {requested} neighbours but cloud has only {available} points")]
    TooFewPoints { requested: usize, available: usize },
    #[error("registration failed at stage `{stage}`: {reason}")]
    Registration { stage: &'static str, reason: String },
    #[error("landmark schema mismatch: {0}")]
    Schema(String),
    #[error("unknown landmark `{0}`")]
    UnknownLandmark(String),
    #[error("empty patch for subject {subject}, landmark `{landmark}`: no points within {radius} mm")]
    EmptyPatch {
        subject: usize,
        landmark: String,
        radius: f64,
    },
    #[error("cannot backpropagate: {0}")]
    Trace(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("degenerate angle at triple {0}")]
    DegenerateAngle(String),
    #[error("missing artifact {path}; run `{required}` first")]
    MissingArtifact { path: PathBuf, required: &'static str },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn format(format: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            format,
            reason: reason.into(),
        }
    }

    /// Whether the error stems from user input/configuration rather than a
    /// runtime or numeric failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config { .. } | Error::MissingArtifact { .. } | Error::UnknownLandmark(_)
        )
    }
}
