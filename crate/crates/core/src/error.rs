use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}line {line}: unknown mnemonic `{token}`", fmt_path(.path))]
    UnknownMnemonic {
        path: Option<PathBuf>,
        line: usize,
        token: String,
    },

    #[error("i/o error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("format error at line {line}: {reason}")]
    Format { line: usize, reason: String },

    #[error("duplicate app id `{0}`")]
    DuplicateAppId(String),

    #[error("invalid app id `{0}`: must be non-empty, must not start with '#', and must not contain tab or newline")]
    InvalidAppId(String),

    #[error("cannot combine vocabularies with n={left} and n={right}")]
    MixedN { left: usize, right: usize },

    #[error("k={k} folds requested but dataset has only {rows} rows")]
    KTooLarge { k: usize, rows: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("contingency table has no samples")]
    EmptyTable,

    #[error("feature index {0} appears in more than one ranking shard")]
    DuplicateFeature(usize),

    #[error("dataset has no rows")]
    EmptyDataset,

    #[error("classifier needs at least two classes, got one")]
    SingleClass,

    #[error("feature mode mismatch: {0}")]
    ModeMismatch(String),

    #[error("feature index {index} out of range for model vocabulary of size {vocab_size}")]
    DimensionMismatch { index: usize, vocab_size: usize },

    #[error("confusion matrix has no samples")]
    EmptyMatrix,

    #[error("{} app(s) without label: {}", .0.len(), .0.join(", "))]
    MissingLabels(Vec<String>),

    #[error("invalid classifier spec: {0}")]
    InvalidSpec(String),
}

fn fmt_path(p: &Option<PathBuf>) -> String {
    match p {
        Some(p) => format!("{}: ", p.display()),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(line: usize, reason: impl Into<String>) -> Self {
        Error::Format {
            line,
            reason: reason.into(),
        }
    }

    /// Whether the error originates from bad user input (as opposed to an
    /// environment or internal failure).
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Io { .. })
    }
}
