use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid language code {0:?}")]
    InvalidLanguageCode(String),

    #[error("unknown language {0:?}")]
    UnknownLanguage(String),

    #[error("token id {id} is outside the vocabulary (size {vocab_size})")]
    InvalidToken { id: u32, vocab_size: usize },

    #[error("tokenizer spec: {0}")]
    TokenizerSpec(String),

    #[error("paired files for stem {stem:?} have {src_lines} and {tgt_lines} lines")]
    Alignment {
        stem: String,
        src_lines: usize,
        tgt_lines: usize,
    },

    #[error("template error on line {line}: {message}")]
    Template { line: usize, message: String },

    #[error("no templates to choose from")]
    NoTemplates,

    #[error("curriculum: {0}")]
    Curriculum(String),

    #[error("no active language pair has positive weight at step {step}")]
    ZeroMixture { step: u64 },

    #[error("active language pair {pair} has an empty dataset")]
    EmptyDataset { pair: String },

    #[error("translator {translator} cannot translate {from} -> {to}")]
    UnsupportedDirection {
        translator: String,
        from: String,
        to: String,
    },

    #[error("metric: {0}")]
    Metric(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("I/O error at line {line}: {source}")]
    Stream {
        line: usize,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
