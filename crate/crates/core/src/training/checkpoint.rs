use std::collections::BTreeMap;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::container::{sha256_hex, Container};
use crate::data::TeamId;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::nn::{ParamGroup, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Freshly initialized, never trained.
    Initial,
    Stage1,
    Stage2,
}

/// Enough to resume a ChaCha stream exactly.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: String,
    pub stream: u64,
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: hex::encode(rng.get_seed()),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        use rand::SeedableRng;
        let bytes = hex::decode(&self.seed).map_err(|e| Error::Format(e.to_string()))?;
        let seed: [u8; 32] = bytes.try_into().map_err(|_| Error::Format("rng seed must be 32 bytes".into()))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos.parse().map_err(|e| Error::Format(format!("rng position: {e}")))?);
        Ok(rng)
    }
}

#[derive(Serialize, Deserialize)]
struct Meta {
    stage: Stage,
    config: TrainConfig,
    teams: Vec<TeamId>,
    group_hashes: BTreeMap<String, String>,
    groups: Vec<(String, ParamGroup)>,
    rng: Option<RngState>,
    #[serde(default)]
    diverged: bool,
    #[serde(default)]
    steps: TrainedSteps,
}

/// Optimizer steps taken in each stage so far.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainedSteps {
    pub stage1: usize,
    pub stage2: usize,
}

/// Named parameter groups with the configuration that shapes them.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub stage: Stage,
    pub config: TrainConfig,
    pub teams: Vec<TeamId>,
    pub params: ParamStore,
    pub rng: Option<RngState>,
    /// Set when training stopped on a non-finite loss; `params` then hold the
    /// last finite state.
    pub diverged: bool,
    pub steps: TrainedSteps,
}

/// SHA-256 over the hashes of the frozen player encoder groups.
pub fn encoder_hash(ps: &ParamStore) -> String {
    let joined: String = ParamGroup::PLAYER_ENCODERS.iter().map(|g| ps.group_hash(*g)).collect();
    sha256_hex(joined.as_bytes())
}

impl Checkpoint {
    pub fn new(stage: Stage, model: &Model, params: &ParamStore) -> Self {
        Checkpoint {
            stage,
            config: model.config.clone(),
            teams: model.team.teams.clone(),
            params: params.clone(),
            rng: None,
            diverged: false,
            steps: TrainedSteps::default(),
        }
    }

    pub fn group_hashes(&self) -> BTreeMap<String, String> {
        ParamGroup::ALL
            .iter()
            .map(|g| (g.name().to_string(), self.params.group_hash(*g)))
            .collect()
    }

    pub fn to_container(&self) -> Result<Container> {
        let meta = Meta {
            stage: self.stage,
            config: self.config.clone(),
            teams: self.teams.clone(),
            group_hashes: self.group_hashes(),
            groups: self.params.iter().map(|(_, p)| (p.name.clone(), p.group)).collect(),
            rng: self.rng.clone(),
            diverged: self.diverged,
            steps: self.steps,
        };
        let mut c = Container::new("checkpoint", serde_json::to_value(meta)?);
        for (_, p) in self.params.iter() {
            c.push(p.name.clone(), p.value.clone());
        }
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        if c.kind != "checkpoint" {
            return Err(Error::Format(format!("expected checkpoint, found {}", c.kind)));
        }
        let meta: Meta = serde_json::from_value(c.meta.clone())?;
        let mut params = ParamStore::new();
        for (name, group) in &meta.groups {
            params.add(name.clone(), *group, c.tensor(name)?.clone());
        }
        let ck = Checkpoint {
            stage: meta.stage,
            config: meta.config,
            teams: meta.teams,
            params,
            rng: meta.rng,
            diverged: meta.diverged,
            steps: meta.steps,
        };
        if ck.group_hashes() != meta.group_hashes {
            return Err(Error::Format("checkpoint parameter hashes do not match its manifest".into()));
        }
        Ok(ck)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.to_container()?.write(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_container(&Container::read_kind(path, "checkpoint")?)
    }

    /// Rebuilds the model and loads every parameter by name.
    pub fn model(&self) -> Result<(Model, ParamStore)> {
        self.model_with(&self.config)
    }

    /// Like [`Checkpoint::model`] under a different configuration, which must
    /// describe the same architecture.
    pub fn model_with(&self, config: &TrainConfig) -> Result<(Model, ParamStore)> {
        let (model, mut ps) = Model::new(config, self.teams.clone())?;
        let copied = ps.load_from(&self.params, &ParamGroup::ALL);
        if copied != ps.len() || self.params.len() != ps.len() {
            return Err(Error::Format(format!(
                "checkpoint holds {} parameters, model expects {} ({copied} matched)",
                self.params.len(),
                ps.len()
            )));
        }
        Ok((model, ps))
    }
}
