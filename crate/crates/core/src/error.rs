use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error(transparent)]
    Csv(#[from] CsvError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(
        context: &'static str,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        Error::Shape {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Model bundle decoding failures.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic bytes {0:?}, not a model bundle")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("truncated payload: needed {needed} bytes, only {available} available")]
    Truncated { needed: usize, available: usize },
    #[error("dimension overflow: {0}")]
    DimensionOverflow(String),
    #[error("invalid header field: {0}")]
    InvalidField(String),
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
}

/// Dataset CSV parsing failures. Line numbers are 1-based and count the header.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum CsvError {
    #[error("missing column `{0}` in header")]
    MissingColumn(String),
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}: unknown class label `{label}`")]
    UnknownClass { line: u64, label: String },
    #[error("gesture `{gesture_id}`: frame indices are not contiguous ({detail})")]
    RaggedFrames { gesture_id: String, detail: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
