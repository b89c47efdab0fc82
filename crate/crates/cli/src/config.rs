//! The sectioned TOML run file. Every section is optional and falls back to
//! the library defaults; unknown keys are errors.

use std::fs;
use std::path::Path;

use mtkit_core::mono::MonoPipelineConfig;
use mtkit_core::para::ParaPipelineConfig;
use mtkit_model::RunConfig;
use serde::{Deserialize, Serialize};

use crate::failure::{CliResult, Failure};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfigFile {
    pub mono: MonoPipelineConfig,
    pub para: ParaPipelineConfig,
    pub run: RunConfig,
}

impl RunConfigFile {
    pub fn parse(text: &str, origin: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| Failure::config(format!("{origin}: {e}")))
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| Failure::config(format!("cannot serialize config: {e}")))
    }

    /// Defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Failure::io(format!("{}: {e}", p.display())))?;
                Self::parse(&text, &p.display().to_string())
            }
        }
    }
}
