use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{MatchRecord, Outcome, TeamId};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeamEdge {
    pub src: usize,
    pub dst: usize,
    pub winning_rate: f64,
}

/// Directed winning-rate graph. `teams[i]` is the team at node `i`; edges
/// point from the side with the strictly higher head-to-head rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeamGraph {
    pub teams: Vec<TeamId>,
    pub edges: Vec<TeamEdge>,
}

impl TeamGraph {
    pub fn index_of(&self, team: TeamId) -> Option<usize> {
        self.teams.binary_search(&team).ok()
    }

    pub fn len(&self) -> usize {
        self.teams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.teams.is_empty()
    }
}

/// Head-to-head record of `(a, b)` with `a < b`: meetings, wins of a, wins of b.
fn head_to_head<'a>(matches: impl IntoIterator<Item = &'a MatchRecord>) -> BTreeMap<(TeamId, TeamId), (u32, u32, u32)> {
    let mut h2h: BTreeMap<(TeamId, TeamId), (u32, u32, u32)> = BTreeMap::new();
    for m in matches {
        let (a, b) = (m.home_team.min(m.away_team), m.home_team.max(m.away_team));
        let entry = h2h.entry((a, b)).or_default();
        entry.0 += 1;
        let winner = match m.label {
            Outcome::Win => Some(m.home_team),
            Outcome::Lose => Some(m.away_team),
            Outcome::Draw => None,
        };
        if winner == Some(a) {
            entry.1 += 1;
        } else if winner == Some(b) {
            entry.2 += 1;
        }
    }
    h2h
}

/// Builds the team graph from `train_matches` over the node set `teams`
/// (sorted and deduplicated here). Teams in `teams` that never played in the
/// given matches become isolated nodes; teams that played but are missing from
/// `teams` are added.
pub fn build_team_graph<'a>(
    train_matches: impl IntoIterator<Item = &'a MatchRecord>,
    teams: impl IntoIterator<Item = TeamId>,
) -> TeamGraph {
    let h2h = head_to_head(train_matches);
    let mut ids: Vec<TeamId> = teams.into_iter().collect();
    for &(a, b) in h2h.keys() {
        ids.push(a);
        ids.push(b);
    }
    ids.sort();
    ids.dedup();
    let idx = |t: TeamId| ids.binary_search(&t).expect("team registered");
    let mut edges = Vec::new();
    for (&(a, b), &(n, wa, wb)) in &h2h {
        let (ra, rb) = (wa as f64 / n as f64, wb as f64 / n as f64);
        if ra > rb {
            edges.push(TeamEdge {
                src: idx(a),
                dst: idx(b),
                winning_rate: ra,
            });
        } else if rb > ra {
            edges.push(TeamEdge {
                src: idx(b),
                dst: idx(a),
                winning_rate: rb,
            });
        }
    }
    TeamGraph { teams: ids, edges }
}

/// Brute-force rate at which `team` beat `other` across `matches`.
pub fn winning_rate<'a>(matches: impl IntoIterator<Item = &'a MatchRecord>, team: TeamId, other: TeamId) -> Option<f64> {
    let (mut n, mut w) = (0u32, 0u32);
    for m in matches {
        let side = if m.home_team == team && m.away_team == other {
            crate::data::Side::Home
        } else if m.away_team == team && m.home_team == other {
            crate::data::Side::Away
        } else {
            continue;
        };
        n += 1;
        if m.outcome_for(side) == Outcome::Win {
            w += 1;
        }
    }
    (n > 0).then(|| w as f64 / n as f64)
}
