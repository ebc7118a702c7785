use std::path::PathBuf;

use thiserror::Error;

use crate::store::Diagnostic;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures while decoding a binary store container.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic bytes {found:?}, expected \"EMB1\"")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported container version {found} (this build reads version {supported})")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("truncated file: {section} needs {needed} bytes but only {available} remain")]
    Truncated {
        section: &'static str,
        needed: u64,
        available: u64,
    },
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("{0} unexpected bytes after the last section")]
    TrailingBytes(u64),
    #[error("unknown role tag {0}")]
    UnknownRole(u8),
    #[error("unsupported label width {0}")]
    LabelWidth(u8),
    #[error("sample id at row {0} is not valid UTF-8")]
    SampleId(usize),
    #[error("manifest content hash {manifest} does not match data section hash {data}")]
    HashMismatch { manifest: String, data: String },
    #[error("expected a {expected} store, found {found}")]
    WrongRole {
        expected: &'static str,
        found: &'static str,
    },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("malformed manifest {path}: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("validation failed with {} diagnostic(s); first: {}", .0.len(), .0.first().map(ToString::to_string).unwrap_or_default())]
    Invalid(Vec<Diagnostic>),
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("k = {k} exceeds the {available} eligible reference rows")]
    KTooLarge { k: usize, available: usize },
    #[error("sample ids are not aligned at position {position}: {left:?} vs {right:?}")]
    Misaligned {
        position: usize,
        left: String,
        right: String,
    },
    #[error("class {0} has no samples")]
    EmptyClass(u32),
    #[error("operation requires single-label ground truth; row {0} has several labels")]
    MultiLabel(usize),
    #[error("prediction file {path}: {message}")]
    Predictions { path: PathBuf, message: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn arg(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }
}
