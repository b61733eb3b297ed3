use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("expected a {expected} Hz signal, found {found} Hz; resample before conversion")]
    ResampleRequired { expected: u32, found: u32 },

    #[error("clip has {len} samples, longer than the {max} sample limit")]
    ClipTooLong { len: usize, max: usize },

    #[error("unsupported wav format: {0}")]
    WavFormat(String),

    #[error("wav codec error: {0}")]
    Wav(#[from] hound::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{path}: {source}")]
    IoAt {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("overlap-add normalization failed: zero window energy at sample {0}")]
    ZeroWindowEnergy(usize),

    #[error("missing class directories: {}", .0.join(", "))]
    MissingClasses(Vec<String>),

    #[error("malformed mel cache: {0}")]
    CacheFormat(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("checkpoint config hash {found} does not match runtime config hash {expected}")]
    ConfigMismatch { expected: String, found: String },

    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("transcriber failed: {0}")]
    Transcriber(String),

    #[error("embedding provider failed: {0}")]
    EmbeddingProvider(String),

    #[error("image encoding failed: {0}")]
    Image(#[from] png::EncodingError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io_at(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::IoAt {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end:
    /// 1 usage, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::Config { .. } => 1,
            Error::Numerical(_) | Error::NonFinite(_) | Error::ZeroWindowEnergy(_) => 3,
            _ => 2,
        }
    }
}
