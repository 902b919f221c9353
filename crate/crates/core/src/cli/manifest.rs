use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::FileConfig;
use super::Command;
use crate::error::Result;

/// Written next to the outputs of every command. `invocation` and `config`
/// together are enough to repeat the run with `cfsr rerun`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub invocation: Command,
    pub config_path: Option<PathBuf>,
    /// Settings after flags were applied.
    pub config: FileConfig,
    pub seed: u64,
    pub outputs: Vec<PathBuf>,
    pub version: String,
}

impl RunManifest {
    pub fn path_in(out: &Path, command: &str) -> PathBuf {
        out.join(format!("{command}.manifest.json"))
    }

    pub fn write(&self, out: &Path) -> Result<PathBuf> {
        let path = Self::path_in(out, &self.command);
        std::fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
