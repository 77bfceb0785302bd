use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("backward requires a 1x1 loss, got {0:?}")]
    NonScalarLoss((usize, usize)),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("action component {value} at index {index} outside [-1, 1]")]
    ActionOutOfRange { index: usize, value: f64 },

    #[error("episode already finished (step {step} of horizon {horizon})")]
    EpisodeFinished { step: usize, horizon: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("segments differ in length: {a} vs {b}")]
    UnequalLengths { a: usize, b: usize },

    #[error("empty batch: {0}")]
    EmptyBatch(&'static str),

    #[error("image size {actual:?} does not match camera image size {expected:?}")]
    ImageSize {
        expected: (u32, u32),
        actual: (u32, u32),
    },

    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: usize, message: String },

    #[error("no preference label found in response")]
    NoLabelFound,

    #[error("could not parse response: {0}")]
    Parse(String),

    #[error("remote endpoint {0} refused: only loopback endpoints are allowed unless `allow_remote` is set")]
    RemoteEndpointBlocked(String),

    #[error("label queue is full ({0} pending pairs)")]
    QueueFull(usize),

    #[error("unknown pair id {0}")]
    UnknownPair(u64),

    #[error("lease on pair {0} is missing, expired or held by another annotator")]
    StaleLease(u64),

    #[error("pair {0} was already labeled")]
    DuplicateSubmission(u64),

    #[error("timed out waiting for {0}")]
    Timeout(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("png: {0}")]
    Png(String),

    #[error("run aborted in iteration {iteration}; resume from {}: {cause}", resume_dir.display())]
    RunAborted {
        iteration: usize,
        resume_dir: std::path::PathBuf,
        cause: Box<Error>,
    },
}
