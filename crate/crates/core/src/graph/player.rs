use std::collections::{BTreeMap, HashMap};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::autograd::Mat;
use crate::data::{EventCounts, EventKind, EventRecord, MatchId, MatchRecord, PlayerId, PlayerMatchLine, Role, Side};
use crate::error::{Error, Result};

/// Node type: home players are red, away players blue.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeType {
    Red,
    Blue,
}

impl NodeType {
    pub const COUNT: usize = 2;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn of_side(side: Side) -> NodeType {
        match side {
            Side::Home => NodeType::Red,
            Side::Away => NodeType::Blue,
        }
    }

    pub fn side(self) -> Side {
        match self {
            NodeType::Red => Side::Home,
            NodeType::Blue => Side::Away,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeType {
    Pass,
    Defense,
}

impl EdgeType {
    pub const COUNT: usize = 2;
    pub const ALL: [EdgeType; 2] = [EdgeType::Pass, EdgeType::Defense];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn of_event(kind: EventKind) -> Option<EdgeType> {
        match kind {
            EventKind::Pass => Some(EdgeType::Pass),
            EventKind::Duel | EventKind::Foul => Some(EdgeType::Defense),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlayerNode {
    pub player: PlayerId,
    pub node_type: NodeType,
    pub role: Role,
    pub counts: EventCounts,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlayerEdge {
    pub src: usize,
    pub dst: usize,
    pub edge_type: EdgeType,
    pub count: u32,
}

/// Directed heterogeneous interaction graph of one match. Home nodes come
/// first, each side in lineup order; edges are sorted by `(src, dst, type)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlayerGraph {
    pub match_id: MatchId,
    pub nodes: Vec<PlayerNode>,
    pub edges: Vec<PlayerEdge>,
}

impl PlayerGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn index_of(&self, player: PlayerId) -> Option<usize> {
        self.nodes.iter().position(|n| n.player == player)
    }

    /// `|V| x 10` matrix of `log(1 + count)`.
    pub fn node_features(&self) -> Mat {
        let mut m = Array2::zeros((self.nodes.len(), EventKind::COUNT));
        for (i, n) in self.nodes.iter().enumerate() {
            for (j, v) in n.counts.log_features().into_iter().enumerate() {
                m[[i, j]] = v;
            }
        }
        m
    }

    /// `|E| x 1` matrix of `log(1 + count)`.
    pub fn edge_features(&self) -> Mat {
        Array2::from_shape_fn((self.edges.len(), 1), |(i, _)| (self.edges[i].count as f64).ln_1p())
    }

    pub fn sides(&self) -> Vec<Side> {
        self.nodes.iter().map(|n| n.node_type.side()).collect()
    }

    /// Relabels nodes so that old node `i` becomes node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> PlayerGraph {
        assert_eq!(perm.len(), self.nodes.len());
        let mut nodes = self.nodes.clone();
        for (i, n) in self.nodes.iter().enumerate() {
            nodes[perm[i]] = n.clone();
        }
        let mut edges: Vec<PlayerEdge> = self
            .edges
            .iter()
            .map(|e| PlayerEdge {
                src: perm[e.src],
                dst: perm[e.dst],
                ..*e
            })
            .collect();
        edges.sort_by_key(|e| (e.src, e.dst, e.edge_type));
        PlayerGraph {
            match_id: self.match_id,
            nodes,
            edges,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        if n > 46 {
            return Err(Error::data(format!("match {}: {n} nodes exceeds 46", self.match_id)));
        }
        let mut seen = std::collections::HashSet::new();
        for e in &self.edges {
            if e.src >= n || e.dst >= n {
                return Err(Error::data(format!("match {}: edge endpoint out of range", self.match_id)));
            }
            if e.count == 0 {
                return Err(Error::data(format!("match {}: zero-count edge", self.match_id)));
            }
            if !seen.insert((e.src, e.dst, e.edge_type)) {
                return Err(Error::data(format!("match {}: duplicate edge", self.match_id)));
            }
        }
        Ok(())
    }
}

/// What to do with an event whose actor or counterpart is not in the lineup.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnlistedPolicy {
    #[default]
    Error,
    Drop,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphOptions {
    pub unlisted: UnlistedPolicy,
    /// Also add the reverse edge for every duel or foul.
    pub mirror_defense: bool,
}

/// Builds the interaction graph of `record`. `lines` supplies roles; events of
/// other matches are ignored.
pub fn build_player_graph(
    record: &MatchRecord,
    lines: &[PlayerMatchLine],
    events: &[EventRecord],
    options: GraphOptions,
) -> Result<PlayerGraph> {
    let roles: HashMap<PlayerId, Role> = lines.iter().map(|l| (l.player_id, l.role)).collect();
    let mut nodes = Vec::new();
    for side in [Side::Home, Side::Away] {
        for &p in record.players(side) {
            nodes.push(PlayerNode {
                player: p,
                node_type: NodeType::of_side(side),
                role: *roles.get(&p).ok_or(Error::UnknownPlayer(p))?,
                counts: EventCounts::default(),
            });
        }
    }
    let index: HashMap<PlayerId, usize> = nodes.iter().enumerate().map(|(i, n)| (n.player, i)).collect();
    let lookup = |p: PlayerId| -> Result<Option<usize>> {
        match (index.get(&p), options.unlisted) {
            (Some(&i), _) => Ok(Some(i)),
            (None, UnlistedPolicy::Drop) => Ok(None),
            (None, UnlistedPolicy::Error) => Err(Error::data(format!(
                "match {}: event references unlisted player {p}",
                record.match_id
            ))),
        }
    };
    let mut edge_counts: BTreeMap<(usize, usize, EdgeType), u32> = BTreeMap::new();
    for e in events.iter().filter(|e| e.match_id == record.match_id) {
        let Some(a) = lookup(e.actor)? else { continue };
        let counterpart = match e.counterpart {
            Some(c) => lookup(c)?,
            None => None,
        };
        nodes[a].counts.increment(e.kind);
        if let (Some(ty), Some(c)) = (EdgeType::of_event(e.kind), counterpart) {
            if c == a {
                continue;
            }
            *edge_counts.entry((a, c, ty)).or_default() += 1;
            if options.mirror_defense && ty == EdgeType::Defense {
                *edge_counts.entry((c, a, ty)).or_default() += 1;
            }
        }
    }
    let edges = edge_counts
        .into_iter()
        .map(|((src, dst, edge_type), count)| PlayerEdge {
            src,
            dst,
            edge_type,
            count,
        })
        .collect();
    let g = PlayerGraph {
        match_id: record.match_id,
        nodes,
        edges,
    };
    g.validate()?;
    Ok(g)
}
