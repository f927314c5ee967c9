use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, LemError>;

#[derive(Debug, Error)]
pub enum LemError {
    #[error("invalid event: {0}")]
    InvalidEvent(String),

    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid target: {0}")]
    InvalidTarget(String),

    #[error("non-finite loss at batch {batch_index}")]
    NonFiniteLoss { batch_index: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("malformed JSON at byte {offset}: {message}")]
    Json { offset: usize, message: String },

    #[error("unknown event type '{event}/{sub_event}' (record {record})")]
    UnknownEventType {
        event: String,
        sub_event: String,
        record: usize,
    },

    #[error("selector matched no matches: {0}")]
    EmptySelection(String),

    #[error("fine-tune selection is empty: {0}")]
    EmptyFineTuneSet(String),

    #[error("invalid fine-tune spec: {0}")]
    InvalidSpec(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("team mismatch: {0}")]
    TeamMismatch(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl LemError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LemError::Io {
            path: path.into(),
            source,
        }
    }
}
