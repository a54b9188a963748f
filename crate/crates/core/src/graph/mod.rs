//! Per-match player interaction graphs, the team winning-rate graph and
//! Laplacian node identifiers.

mod laplacian;
mod player;
mod team;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use laplacian::{
    collapsed_adjacency, fix_sign, identifiers_from_adjacency, laplacian_node_identifiers,
    NodeIdentifierSet,
};
pub use player::{
    build_player_graph, EdgeType, GraphOptions, NodeType, PlayerEdge, PlayerGraph, PlayerNode,
    UnlistedPolicy,
};
pub use team::{build_team_graph, winning_rate, TeamEdge, TeamGraph};

use crate::container::Container;
use crate::data::{group_events, Dataset, EventRecord, MatchId};
use crate::error::{Error, Result};

/// A graph with its identifiers, as stored in the cache.
#[derive(Clone, Debug, PartialEq)]
pub struct CachedGraph {
    pub graph: PlayerGraph,
    pub ids: NodeIdentifierSet,
}

impl CachedGraph {
    pub fn new(graph: PlayerGraph, d_id: usize) -> Self {
        let ids = laplacian_node_identifiers(&graph, d_id);
        CachedGraph { graph, ids }
    }

    pub fn to_container(&self) -> Container {
        #[derive(Serialize)]
        struct Meta<'a> {
            graph: &'a PlayerGraph,
            eigenvalues: &'a [f64],
            used: usize,
        }
        let meta = serde_json::to_value(Meta {
            graph: &self.graph,
            eigenvalues: &self.ids.eigenvalues,
            used: self.ids.used,
        })
        .expect("graph serializes");
        let mut c = Container::new("player_graph", meta);
        c.push("identifiers", self.ids.identifiers.clone());
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        #[derive(Deserialize)]
        struct Meta {
            graph: PlayerGraph,
            eigenvalues: Vec<f64>,
            used: usize,
        }
        if c.kind != "player_graph" {
            return Err(Error::Format(format!("expected player_graph, found {}", c.kind)));
        }
        let meta: Meta = serde_json::from_value(c.meta.clone())?;
        meta.graph.validate()?;
        Ok(CachedGraph {
            graph: meta.graph,
            ids: NodeIdentifierSet {
                identifiers: c.tensor("identifiers")?.clone(),
                eigenvalues: meta.eigenvalues,
                used: meta.used,
            },
        })
    }
}

/// Builds graphs and identifiers for every match in the dataset.
pub fn build_all_graphs(
    ds: &Dataset,
    events: &[EventRecord],
    options: GraphOptions,
    d_id: usize,
) -> Result<BTreeMap<MatchId, CachedGraph>> {
    let grouped = group_events(events);
    let empty = Vec::new();
    ds.matches()
        .iter()
        .map(|m| {
            let ev = grouped.get(&m.match_id).unwrap_or(&empty);
            let g = build_player_graph(m, ds.lines(m.match_id), ev, options)?;
            Ok((m.match_id, CachedGraph::new(g, d_id)))
        })
        .collect()
}

fn cache_file(dir: &Path, id: MatchId) -> std::path::PathBuf {
    dir.join(format!("{}.higf", id.0))
}

pub fn write_graph_cache(dir: &Path, graphs: &BTreeMap<MatchId, CachedGraph>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (&id, g) in graphs {
        g.to_container().write(&cache_file(dir, id))?;
    }
    Ok(())
}

/// Loads the cached graphs of `ids`; a missing file is an error naming the
/// match.
pub fn read_graph_cache(dir: &Path, ids: impl IntoIterator<Item = MatchId>) -> Result<BTreeMap<MatchId, CachedGraph>> {
    ids.into_iter()
        .map(|id| {
            let path = cache_file(dir, id);
            if !path.exists() {
                return Err(Error::data(format!("no cached graph for match {id} in {}", dir.display())));
            }
            Ok((id, CachedGraph::from_container(&Container::read(&path)?)?))
        })
        .collect()
}
