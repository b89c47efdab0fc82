//! Exit codes and the mapping from library errors onto them.

use std::fmt;

use mtkit_core::Error as CoreError;
use mtkit_model::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    /// Anything without a more specific code.
    Failure = 1,
    /// Bad config file, flag value, translator name or dictionary.
    Config = 2,
    /// Unreadable, unwritable or malformed input and output files.
    Io = 3,
    /// Paired files with unequal line counts.
    Alignment = 4,
    /// Checkpoint incompatible with the run or corrupted.
    Checkpoint = 5,
}

/// An error together with the exit code it maps to.
pub struct Failure {
    pub code: ExitCode,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(code: ExitCode, error: impl Into<anyhow::Error>) -> Self {
        Self {
            code,
            error: error.into(),
        }
    }

    pub fn config(message: impl fmt::Display) -> Self {
        Self::new(ExitCode::Config, anyhow::anyhow!("{message}"))
    }

    pub fn io(message: impl fmt::Display) -> Self {
        Self::new(ExitCode::Io, anyhow::anyhow!("{message}"))
    }
}

impl fmt::Debug for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {:#}", self.code, self.error)
    }
}

pub fn core_code(e: &CoreError) -> ExitCode {
    match e {
        CoreError::Io { .. } | CoreError::Stream { .. } | CoreError::Parse { .. } => ExitCode::Io,
        CoreError::Template { .. } | CoreError::NoTemplates => ExitCode::Io,
        CoreError::Alignment { .. } => ExitCode::Alignment,
        CoreError::Curriculum(_) | CoreError::ZeroMixture { .. } | CoreError::EmptyDataset { .. } => ExitCode::Config,
        CoreError::UnsupportedDirection { .. } => ExitCode::Config,
        _ => ExitCode::Failure,
    }
}

pub fn model_code(e: &ModelError) -> ExitCode {
    match e {
        ModelError::Config(_) => ExitCode::Config,
        ModelError::Checkpoint(_) | ModelError::ChecksumMismatch => ExitCode::Checkpoint,
        ModelError::Io { .. } | ModelError::EmptyCorpus => ExitCode::Io,
        ModelError::Core(c) => core_code(c),
        _ => ExitCode::Failure,
    }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        Self::new(core_code(&e), e)
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        Self::new(model_code(&e), e)
    }
}

pub type CliResult<T> = Result<T, Failure>;

/// Marks any library error as a configuration error.
pub trait OrConfig<T> {
    fn or_config(self) -> CliResult<T>;
}

impl<T, E: fmt::Display> OrConfig<T> for Result<T, E> {
    fn or_config(self) -> CliResult<T> {
        self.map_err(Failure::config)
    }
}
