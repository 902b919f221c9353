use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::search::SearchConfig;
use crate::traffic::GenerateConfig;
use crate::vis::VisConfig;

/// Settings file read by `--config`. Every section is optional and missing
/// keys keep their defaults; command-line flags are applied on top.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub generate: GenerateConfig,
    pub vis: VisConfig,
    pub search: SearchConfig,
    pub reproduce: ReproduceConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReproduceConfig {
    /// Multiplies the seed count and epoch budget of every experiment.
    pub scale: f64,
    pub seeds: usize,
    pub epochs: usize,
}

impl Default for ReproduceConfig {
    fn default() -> Self {
        Self {
            scale: 1.0,
            seeds: 10,
            epochs: 200,
        }
    }
}

impl ReproduceConfig {
    pub fn scaled_seeds(&self) -> usize {
        ((self.seeds as f64 * self.scale).round() as usize).max(1)
    }

    pub fn scaled_epochs(&self) -> usize {
        ((self.epochs as f64 * self.scale).round() as usize).max(1)
    }
}

impl FileConfig {
    /// Reads a settings file, or the `config` snapshot of a run manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if value.get("invocation").is_some() {
            value = value.get("config").cloned().unwrap_or_default();
        }
        serde_json::from_value(value).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"search": {"batch": 50}, "reproduce": {"scale": 0.3}}"#).unwrap();
        let c = FileConfig::load(&p).unwrap();
        assert_eq!(c.search.batch, 50);
        assert_eq!(c.search.max_epochs, SearchConfig::default().max_epochs);
        assert_eq!(c.reproduce.scaled_seeds(), 3);
        assert_eq!(c.reproduce.scaled_epochs(), 60);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"serch": {}}"#).unwrap();
        assert!(matches!(FileConfig::load(&p), Err(Error::Config(_))));
    }
}
