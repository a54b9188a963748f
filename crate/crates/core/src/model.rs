//! The assembled model: player encoders, team encoder, match comparison and
//! the pretraining heads, plus the inference path over stored embeddings.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Var};
use crate::data::{player_history, Dataset, HistoryScope, MatchId, MatchRecord, PlayerId, Side, TeamId};
use crate::error::{Error, Result};
use crate::graph::TeamGraph;
use crate::match_net::{pool_rows, MatchForward, MatchNet, MatchPrediction};
use crate::nn::{Init, Linear, ParamGroup, ParamStore};
use crate::player_net::{fuse, PlayerNet};
use crate::team_net::{lookup_match_teams, TeamNet};
use crate::training::{EmbeddingStore, TrainConfig};

/// Readouts used only while pretraining the two player encoders.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PretrainHeads {
    pub global: Linear,
    pub local: Linear,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: TrainConfig,
    pub player: PlayerNet,
    pub team: TeamNet,
    pub match_net: MatchNet,
    pub heads: PretrainHeads,
}

impl Model {
    /// Fresh parameters drawn from `config.seed`. `teams` must be sorted.
    pub fn new(config: &TrainConfig, teams: Vec<TeamId>) -> Result<(Model, ParamStore)> {
        config.validate()?;
        let mut ps = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let player = PlayerNet::new(&mut ps, &mut rng, config.player);
        let team = TeamNet::new(&mut ps, &mut rng, config.team, teams);
        let match_net = MatchNet::new(&mut Init::new(&mut ps, &mut rng, ParamGroup::MatchNet), config.match_net_config());
        let heads = {
            let mut init = Init::new(&mut ps, &mut rng, ParamGroup::PretrainHeads);
            PretrainHeads {
                global: Linear::new(&mut init, "global", config.player.output, 1, true),
                local: Linear::new(&mut init, "local", config.player.output, 1, true),
            }
        };
        Ok((
            Model {
                config: config.clone(),
                player,
                team,
                match_net,
                heads,
            },
            ps,
        ))
    }

    /// Pooled embedding per roster slot and each slot's history length.
    pub fn pooled_embeddings(&self, t: &mut Tape, ps: &ParamStore, store: &EmbeddingStore, inputs: &MatchInputs) -> Result<(Var, Vec<usize>)> {
        let n = inputs.players.len();
        let width = self.config.player.output;
        let lengths: Vec<usize> = inputs.history.iter().map(Vec::len).collect();
        if !self.config.use_player_net {
            return Ok((t.constant(Array2::zeros((n, width))), lengths));
        }
        let mut rows = Vec::new();
        let mut owner = Vec::new();
        for (slot, (src, hist)) in inputs.sources.iter().zip(&inputs.history).enumerate() {
            for m in hist {
                let r = store
                    .row(*src, *m)
                    .ok_or_else(|| Error::data(format!("no stored embedding for player {src} in match {m}")))?;
                rows.push(r);
                owner.push(slot);
            }
        }
        if rows.is_empty() {
            return Ok((t.constant(Array2::zeros((n, width))), lengths));
        }
        let glo = t.constant(store.global_rows(&rows));
        let loc = t.constant(store.local_rows(&rows));
        let fused = match (self.config.use_global, self.config.use_local) {
            (true, false) => glo,
            (false, true) => loc,
            _ => {
                let x = t.constant(store.feature_rows(&rows));
                let w = self.player.gate(t, ps, x);
                fuse(t, glo, loc, w)?
            }
        };
        Ok((pool_rows(t, fused, &owner, n), lengths))
    }

    /// Team rows for a fixture, or `None` when the team path is disabled.
    pub fn team_rows(&self, t: &mut Tape, rep: Option<Var>, graph: &TeamGraph, home: TeamId, away: TeamId) -> Result<Option<(Var, Var)>> {
        match rep {
            Some(rep) if self.config.use_team_net => Ok(Some(lookup_match_teams(t, rep, graph, home, away)?)),
            _ => Ok(None),
        }
    }

    /// Encodes the team graph when the team path is enabled.
    pub fn team_representation(&self, t: &mut Tape, ps: &ParamStore, graph: &TeamGraph) -> Result<Option<Var>> {
        if self.config.use_team_net {
            Ok(Some(self.team.encode_teams(t, ps, graph)?))
        } else {
            Ok(None)
        }
    }

    pub fn forward_match(&self, t: &mut Tape, ps: &ParamStore, store: &EmbeddingStore, inputs: &MatchInputs, team_rows: Option<(Var, Var)>) -> Result<MatchForward> {
        let (pooled, lengths) = self.pooled_embeddings(t, ps, store, inputs)?;
        self.match_net.forward(t, ps, pooled, &lengths, &inputs.sides, team_rows)
    }

    /// Prediction on a fresh tape.
    pub fn predict(&self, ps: &ParamStore, store: &EmbeddingStore, graph: &TeamGraph, inputs: &MatchInputs) -> Result<MatchPrediction> {
        let mut t = Tape::new();
        let rep = self.team_representation(&mut t, ps, graph)?;
        let rows = self.team_rows(&mut t, rep, graph, inputs.home_team, inputs.away_team)?;
        let f = self.forward_match(&mut t, ps, store, inputs, rows)?;
        MatchPrediction::from_forward(&t, &f, &self.config.thresholds)
    }
}

/// Roster and history sources for one fixture. `sources[i]` is the player
/// whose history fills slot `i`; it differs from `players[i]` only under a
/// substitution.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchInputs {
    pub home_team: TeamId,
    pub away_team: TeamId,
    pub players: Vec<PlayerId>,
    pub sources: Vec<PlayerId>,
    pub sides: Vec<Side>,
    pub history: Vec<Vec<MatchId>>,
}

impl MatchInputs {
    pub fn history_lengths(&self) -> Vec<usize> {
        self.history.iter().map(Vec::len).collect()
    }
}

/// Inputs for a dataset fixture. `overrides` maps an outgoing player to the
/// incoming player whose history replaces theirs; the incoming player must
/// have history before the fixture.
pub fn match_inputs(
    ds: &Dataset,
    record: &MatchRecord,
    capacity: usize,
    scope: HistoryScope,
    overrides: &BTreeMap<PlayerId, PlayerId>,
) -> Result<MatchInputs> {
    let mut inputs = MatchInputs {
        home_team: record.home_team,
        away_team: record.away_team,
        players: Vec::new(),
        sources: Vec::new(),
        sides: Vec::new(),
        history: Vec::new(),
    };
    for side in [Side::Home, Side::Away] {
        for &p in record.players(side) {
            let src = overrides.get(&p).copied().unwrap_or(p);
            let window = player_history(ds, src, record.match_id, capacity, scope)?;
            if src != p && window.is_empty() {
                return Err(Error::NoHistory(src));
            }
            inputs.players.push(p);
            inputs.sources.push(src);
            inputs.sides.push(side);
            inputs.history.push(window.match_ids().collect());
        }
    }
    Ok(inputs)
}

/// Each player's latest `capacity` matches in the dataset.
pub fn latest_history(ds: &Dataset, player: PlayerId, capacity: usize) -> Vec<MatchId> {
    let all: Vec<MatchId> = ds.matches_of(player).map(|m| m.match_id).collect();
    all[all.len().saturating_sub(capacity)..].to_vec()
}

/// Inputs for an arbitrary lineup using every player's most recent history.
pub fn roster_inputs(ds: &Dataset, home_team: TeamId, away_team: TeamId, home: &[PlayerId], away: &[PlayerId], capacity: usize) -> MatchInputs {
    let mut inputs = MatchInputs {
        home_team,
        away_team,
        players: Vec::new(),
        sources: Vec::new(),
        sides: Vec::new(),
        history: Vec::new(),
    };
    for (side, list) in [(Side::Home, home), (Side::Away, away)] {
        for &p in list {
            inputs.players.push(p);
            inputs.sources.push(p);
            inputs.sides.push(side);
            inputs.history.push(latest_history(ds, p, capacity));
        }
    }
    inputs
}
