use std::path::PathBuf;

use thiserror::Error;

use crate::taxonomy::TaskKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("codec id `{0}` is already registered")]
    DuplicateCodecId(String),

    #[error("unknown codec id `{id}`{}", line_suffix(*.line))]
    UnknownCodecId { id: String, line: Option<usize> },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("utterance id `{0}` appears more than once")]
    DuplicateUtteranceId(String),

    #[error("expected {expected} Hz audio, found {found} Hz in {path}")]
    SampleRateMismatch {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("category `{0}` has no spoof entries to sample from")]
    EmptyCategory(String),

    #[error("category `{category}` needs {requested} spoof entries but only {available} exist")]
    CategoryExhausted {
        category: String,
        requested: usize,
        available: usize,
    },

    #[error("no label for active head {0}")]
    MissingLabel(TaskKind),

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("checkpoint version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: String, found: String },

    #[error("no active heads")]
    NoActiveHeads,

    #[error("scores need at least one bona fide and one spoof label")]
    DegenerateLabels,

    #[error("empty input")]
    EmptyInput,

    #[error("utterance `{0}` is not in the manifest")]
    MissingUtterance(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn line_suffix(line: Option<usize>) -> String {
    match line {
        Some(l) => format!(" at line {l}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
