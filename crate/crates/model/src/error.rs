use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),

    #[error("token id {id} is outside the vocabulary (size {vocab_size})")]
    InvalidToken { id: u32, vocab_size: usize },

    #[error("sequence of {len} tokens exceeds the context of {context}")]
    SequenceTooLong { len: usize, context: usize },

    #[error("empty input sequence")]
    EmptySequence,

    #[error("non-finite value in {tensor}")]
    NonFinite { tensor: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("checkpoint checksum mismatch (file truncated or corrupted)")]
    ChecksumMismatch,

    #[error("empty training corpus")]
    EmptyCorpus,

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] mtkit_core::Error),
}

impl ModelError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ModelError::Io {
            path: path.into(),
            source,
        }
    }
}
