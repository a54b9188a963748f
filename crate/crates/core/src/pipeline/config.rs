use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::RunDir;
use crate::data::synth::SynthConfig;
use crate::data::SplitConfig;
use crate::error::{Error, Result};
use crate::training::TrainConfig;

/// File locations, training settings and the service address. Unset input
/// paths fall back to the run directory's `data/` folder, which is where
/// `synth` writes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub run_dir: PathBuf,
    pub events: Option<PathBuf>,
    pub matches: Option<PathBuf>,
    pub graph_cache: Option<PathBuf>,
    /// Checkpoint used by evaluation, analysis and serving.
    pub checkpoint: Option<PathBuf>,
    pub bind: String,
    pub split: SplitConfig,
    pub synth: SynthConfig,
    pub train: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            run_dir: PathBuf::from("runs/default"),
            events: None,
            matches: None,
            graph_cache: None,
            checkpoint: None,
            bind: "127.0.0.1:8080".to_string(),
            split: SplitConfig::default(),
            synth: SynthConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.synth.validate()?;
        if !(0.0..=1.0).contains(&self.split.train_fraction) {
            return Err(Error::config("split.train_fraction must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn run(&self) -> RunDir {
        RunDir::new(&self.run_dir)
    }

    pub fn events_path(&self) -> PathBuf {
        self.events.clone().unwrap_or_else(|| self.run().data_dir().join("events.jsonl"))
    }

    pub fn matches_path(&self) -> PathBuf {
        self.matches.clone().unwrap_or_else(|| self.run().data_dir().join("matches.json"))
    }

    pub fn graph_dir(&self) -> PathBuf {
        self.graph_cache.clone().unwrap_or_else(|| self.run().graphs())
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.run().stage2_checkpoint())
    }
}
