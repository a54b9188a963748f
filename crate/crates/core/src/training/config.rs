use serde::{Deserialize, Serialize};

use crate::data::HistoryScope;
use crate::error::{Error, Result};
use crate::graph::GraphOptions;
use crate::match_net::{MatchNetConfig, Thresholds};
use crate::optim::AdamConfig;
use crate::player_net::PlayerNetConfig;
use crate::team_net::TeamNetConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// Squared error against 1 / 0.5 / 0 targets.
    #[default]
    MseTargets,
    /// Three-way cross-entropy over `[win, draw, lose]`.
    CrossEntropy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Optimizer steps, not epochs.
    pub stage1_steps: usize,
    pub stage2_steps: usize,
    /// History window length.
    pub history: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub clip_norm: f64,
    pub sampler_stage1: bool,
    pub sampler_stage2: bool,
    pub use_global: bool,
    pub use_local: bool,
    pub use_player_net: bool,
    pub use_team_net: bool,
    pub loss_mode: LossMode,
    pub thresholds: Thresholds,
    pub history_scope: HistoryScope,
    pub graph: GraphOptions,
    pub player: PlayerNetConfig,
    pub team: TeamNetConfig,
    pub match_net: MatchNetConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            stage1_steps: 2328,
            stage2_steps: 2134,
            history: 10,
            batch_size: 32,
            seed: 0,
            clip_norm: 5.0,
            sampler_stage1: true,
            sampler_stage2: true,
            use_global: true,
            use_local: true,
            use_player_net: true,
            use_team_net: true,
            loss_mode: LossMode::MseTargets,
            thresholds: Thresholds::default(),
            history_scope: HistoryScope::AllCompetitions,
            graph: GraphOptions::default(),
            player: PlayerNetConfig::default(),
            team: TeamNetConfig::default(),
            match_net: MatchNetConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::config("clip_norm must be positive"));
        }
        if self.history == 0 || self.batch_size == 0 {
            return Err(Error::config("history and batch_size must be positive"));
        }
        if self.use_player_net && !self.use_global && !self.use_local {
            return Err(Error::config(
                "use_global and use_local cannot both be off while use_player_net is on",
            ));
        }
        self.player.validate()?;
        if self.player.output != self.match_net.width || self.team.output != self.match_net.width {
            return Err(Error::config(format!(
                "player output {}, team output {} and match width {} must agree",
                self.player.output, self.team.output, self.match_net.width
            )));
        }
        if self.match_net.width % self.match_net.heads != 0 {
            return Err(Error::config("match_net.width must be divisible by heads"));
        }
        if self.team.layers == 0 {
            return Err(Error::config("team.layers must be positive"));
        }
        Thresholds::new(self.thresholds.lower, self.thresholds.upper)?;
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            ..AdamConfig::default()
        }
    }

    /// Match head configuration with the output count implied by the loss.
    pub fn match_net_config(&self) -> MatchNetConfig {
        MatchNetConfig {
            outputs: match self.loss_mode {
                LossMode::MseTargets => 1,
                LossMode::CrossEntropy => 3,
            },
            ..self.match_net
        }
    }
}
