// SPDX-License-Identifier: MIT OR Apache-2.0

//! Error type shared by every module of the toolkit.

use std::path::PathBuf;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic in {path}: expected {expected:?}, found {found:?}")]
    BadMagic {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("schema version mismatch: expected {expected}, found {found}")]
    SchemaVersion { expected: u32, found: u32 },

    #[error("payload length mismatch: header implies {expected} bytes, file has {found}")]
    PayloadLength { expected: usize, found: usize },

    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },

    #[error("corpus line {line}: {message}")]
    CorpusParse { line: usize, message: String },

    #[error("invalid corpus: {0}")]
    InvalidCorpus(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("invalid task dataset: {0}")]
    InvalidTask(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("report validation failed: {0}")]
    InvalidReport(String),

    #[error("unknown tag {0:?} in subtask specification")]
    UnknownTag(String),

    #[error("probe has not been trained")]
    UntrainedProbe,

    #[error("infeasible plant specification: {0}")]
    InfeasiblePlant(String),

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

    /// True for errors caused by bad inputs or configuration rather than
    /// by the environment. The CLI maps these to exit status 1.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io { .. })
    }
}
