use std::path::PathBuf;

use thiserror::Error;

/// Coarse error classes, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("malformed manifest at line {line}: {msg}")]
    MalformedManifest { line: usize, msg: String },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("malformed interval: {0}")]
    MalformedInterval(String),
    #[error("alignment spans do not partition the frame range: {0}")]
    AlignmentGap(String),
    #[error("non-finite value in {0}")]
    NonFiniteValue(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("seen and unseen speaker lists overlap: {0:?}")]
    OverlappingSplits(Vec<String>),
    #[error("unknown speaker: {0}")]
    UnknownSpeaker(String),
    #[error("sequence too short: {0}")]
    TooShort(String),
    #[error("content script does not match frame count: {0}")]
    ScriptMismatch(String),
    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: u64, detail: String },
    #[error("joint index out of range: {0}")]
    BadIndex(String),
    #[error("invalid BODY25 joint map: {0}")]
    BadMapping(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
    #[error("i/o error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::BadMapping(_) => ErrorClass::Config,
            Error::NonFiniteLoss { .. } => ErrorClass::Numeric,
            _ => ErrorClass::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
