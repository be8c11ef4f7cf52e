use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Binary container problem (FEAT, checkpoint, index) at a byte offset.
    #[error("{path}: {message} (at byte offset {offset})")]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    /// Text format problem at a 1-based line number.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid feature matrix {utterance}: {message}")]
    Features { utterance: String, message: String },

    #[error("invalid alignment for utterance {utterance}: {message}")]
    Alignment { utterance: String, message: String },

    #[error("unknown utterance {0}")]
    UnknownUtterance(String),

    #[error("word {0:?} is not in the lexicon")]
    UnknownWord(String),

    #[error("phone {0:?} is not in the phone inventory")]
    UnknownPhone(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("window [{start}, {end}] out of range for {frames} frames")]
    WindowOutOfRange {
        start: usize,
        end: usize,
        frames: usize,
    },

    #[error("zero-norm vector")]
    ZeroNorm,

    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    #[error("empty alignment: shortest word length is undefined")]
    EmptyAlignment,

    #[error("invalid augmentation policy: {0}")]
    InvalidPolicy(String),

    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(String),

    #[error("training diverged at step {step}: loss {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("architecture mismatch: {0}")]
    Architecture(String),

    #[error("checkpoint version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("model fingerprint mismatch between query and index")]
    FingerprintMismatch,

    #[error("index is empty")]
    EmptyIndex,

    #[error("score tables have different key sets: {0}")]
    KeyMismatch(String),

    #[error("duplicate entry {0}")]
    Duplicate(String),

    #[error("invalid trial set: {0}")]
    InvalidTrials(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            offset,
            message: message.into(),
        }
    }
}
