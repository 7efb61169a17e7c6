use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dataset spec: {0}")]
    InvalidSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    Shape {
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("clip of {needed} frames does not fit a video of {frames} frames")]
    ClipTooLong { needed: usize, frames: usize },

    #[error("invalid box {0}")]
    InvalidBox(String),

    #[error("{path}: unsupported schema version {found} (expected {expected})")]
    VersionMismatch {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("{path}: truncated file ({found} bytes, expected {expected})")]
    Truncated {
        path: PathBuf,
        found: u64,
        expected: u64,
    },

    #[error("{path}: checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    Checksum {
        path: PathBuf,
        stored: u32,
        computed: u32,
    },

    #[error("malformed archive {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error("missing pseudo-labels for video {0}")]
    MissingLabels(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("incompatible checkpoint: {0}")]
    Incompatible(String),

    #[error("non-finite loss at epoch {epoch}, step {step}: {detail}")]
    NumericFailure {
        epoch: usize,
        step: usize,
        detail: String,
    },

    #[error("video {video_id}: {source}")]
    Video {
        video_id: String,
        #[source]
        source: Box<Error>,
    },

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

    pub(crate) fn in_video(video_id: &str, source: Error) -> Self {
        Error::Video {
            video_id: video_id.to_string(),
            source: Box::new(source),
        }
    }

    /// Innermost error, looking through per-video context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Video { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
