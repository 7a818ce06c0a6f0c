use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image decode failed: {0}")]
    Decode(String),

    #[error("image encode failed: {0}")]
    Encode(String),

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("embedding file: {0}")]
    Embedding(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid attack: {0}")]
    InvalidAttack(String),

    #[error("invalid key: {0}")]
    InvalidKey(String),

    #[error("empty training set")]
    EmptyTrainingSet,

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("decrypt structural check failed: {0}")]
    WrongKey(String),

    #[error("corrupt payload: {0}")]
    CorruptPayload(String),

    #[error("crc mismatch: stored {stored:08x}, computed {computed:08x}")]
    CrcMismatch { stored: u32, computed: u32 },

    #[error("missing record: {0}")]
    MissingRecord(String),

    #[error("duplicate record: {0}")]
    DuplicateRecord(String),

    #[error("unreachable target: {0}")]
    UnreachableTarget(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
