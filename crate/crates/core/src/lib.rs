//! Data side of the toolkit: language registry, tokenization, corpus
//! cleaning, instruction templates, curriculum sampling, back-translation
//! and evaluation metrics.

pub mod augment;
pub mod curriculum;
pub mod error;
pub mod eval;
pub mod mono;
pub mod para;
pub mod record;
pub mod registry;
pub mod script;
pub mod templates;
pub mod tokenizer;

pub use error::{Error, Result};
pub use record::{FilterVerdict, MonoRecord, ParallelRecord, PipelineReport, Stage};
pub use registry::{LanguageCode, LanguageInfo, LanguagePair, Registry, ResourceTier};
pub use tokenizer::{TokenSequence, TokenizerMode, TokenizerSpec};
