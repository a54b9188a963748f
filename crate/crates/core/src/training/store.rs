use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::autograd::{Mat, Tape};
use crate::container::Container;
use crate::data::{EventKind, MatchId, PlayerId};
use crate::error::{Error, Result};
use crate::graph::CachedGraph;
use crate::model::Model;
use crate::nn::ParamStore;

/// Per-(player, match) expert embeddings computed offline with frozen
/// encoders. Both experts are kept so the gate can still mix them; the raw
/// node features are kept as the gate's input.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingStore {
    pub width: usize,
    /// Hash of the encoder parameters that produced the store.
    pub source: String,
    keys: Vec<(PlayerId, MatchId)>,
    index: HashMap<(PlayerId, MatchId), usize>,
    global: Mat,
    local: Mat,
    features: Mat,
}

#[derive(Serialize, Deserialize)]
struct StoreMeta {
    width: usize,
    source: String,
    keys: Vec<(PlayerId, MatchId)>,
}

impl EmbeddingStore {
    fn assemble(width: usize, source: String, keys: Vec<(PlayerId, MatchId)>, global: Mat, local: Mat, features: Mat) -> Self {
        let index = keys.iter().enumerate().map(|(i, k)| (*k, i)).collect();
        EmbeddingStore {
            width,
            source,
            keys,
            index,
            global,
            local,
            features,
        }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[(PlayerId, MatchId)] {
        &self.keys
    }

    pub fn row(&self, player: PlayerId, m: MatchId) -> Option<usize> {
        self.index.get(&(player, m)).copied()
    }

    pub fn contains(&self, player: PlayerId, m: MatchId) -> bool {
        self.index.contains_key(&(player, m))
    }

    pub fn global_rows(&self, rows: &[usize]) -> Mat {
        self.global.select(Axis(0), rows)
    }

    pub fn local_rows(&self, rows: &[usize]) -> Mat {
        self.local.select(Axis(0), rows)
    }

    pub fn feature_rows(&self, rows: &[usize]) -> Mat {
        self.features.select(Axis(0), rows)
    }

    pub fn to_container(&self) -> Container {
        let meta = serde_json::to_value(StoreMeta {
            width: self.width,
            source: self.source.clone(),
            keys: self.keys.clone(),
        })
        .expect("store metadata serializes");
        let mut c = Container::new("embedding_store", meta);
        c.push("global", self.global.clone());
        c.push("local", self.local.clone());
        c.push("features", self.features.clone());
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        if c.kind != "embedding_store" {
            return Err(Error::Format(format!("expected embedding_store, found {}", c.kind)));
        }
        let meta: StoreMeta = serde_json::from_value(c.meta.clone())?;
        let (g, l, f) = (c.tensor("global")?, c.tensor("local")?, c.tensor("features")?);
        let n = meta.keys.len();
        if g.dim() != (n, meta.width) || l.dim() != (n, meta.width) || f.dim() != (n, EventKind::COUNT) {
            return Err(Error::Format("embedding store tensor shapes disagree with its keys".into()));
        }
        Ok(Self::assemble(meta.width, meta.source, meta.keys, g.clone(), l.clone(), f.clone()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.to_container().write(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_container(&Container::read_kind(path, "embedding_store")?)
    }
}

/// Runs both encoders over every graph with the current parameters. Keys are
/// ordered by match id, then node order.
pub fn precompute_embeddings(model: &Model, ps: &ParamStore, graphs: &BTreeMap<MatchId, CachedGraph>) -> Result<EmbeddingStore> {
    let width = model.config.player.output;
    let mut keys = Vec::new();
    let mut glo_rows: Vec<Mat> = Vec::new();
    let mut loc_rows: Vec<Mat> = Vec::new();
    let mut feat_rows: Vec<Mat> = Vec::new();
    for (&id, cg) in graphs {
        let n = cg.graph.node_count();
        let mut t = Tape::new();
        let (glo, loc) = if model.config.use_player_net {
            let (g, l) = model.player.expert_embeddings(&mut t, ps, cg)?;
            (t.value(g).clone(), t.value(l).clone())
        } else {
            (Array2::zeros((n, width)), Array2::zeros((n, width)))
        };
        glo_rows.push(glo);
        loc_rows.push(loc);
        feat_rows.push(cg.graph.node_features());
        keys.extend(cg.graph.nodes.iter().map(|v| (v.player, id)));
    }
    let stack = |parts: &[Mat], cols: usize| -> Mat {
        if parts.is_empty() {
            return Array2::zeros((0, cols));
        }
        let views: Vec<_> = parts.iter().map(|m| m.view()).collect();
        ndarray::concatenate(Axis(0), &views).expect("consistent widths")
    };
    Ok(EmbeddingStore::assemble(
        width,
        super::checkpoint::encoder_hash(ps),
        keys,
        stack(&glo_rows, width),
        stack(&loc_rows, width),
        stack(&feat_rows, EventKind::COUNT),
    ))
}
