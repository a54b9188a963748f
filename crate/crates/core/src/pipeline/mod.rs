//! End-to-end orchestration: in-memory training and the on-disk run
//! directory used by the command line and the service.

mod config;
mod run;

use std::collections::BTreeMap;

pub use config::PipelineConfig;
pub use run::{
    attention_report, build_graphs, evaluate, ingest, load_dataset, load_events, load_graphs, load_team_graph, precompute, pretrain, substitute, synth, train,
    AttentionReport, Evaluation, RunDir, RunStatus, Snapshot, UNTRAINED_WARNING,
};

use crate::data::{Dataset, MatchId};
use crate::error::{Error, Result};
use crate::eval::Predictor;
use crate::graph::{build_team_graph, CachedGraph, TeamGraph};
use crate::model::Model;
use crate::nn::ParamStore;
use crate::training::{precompute_embeddings, stage1_pretrain, stage2_train, EmbeddingStore, PretrainExample, Stage1Report, Stage2Report, TrainConfig};

/// Everything produced by a full training run.
pub struct Trained {
    pub model: Model,
    pub params: ParamStore,
    pub store: EmbeddingStore,
    pub team_graph: TeamGraph,
    pub stage1: Stage1Report,
    pub stage2: Stage2Report,
}

impl Trained {
    pub fn predictor<'a>(&'a self, ds: &'a Dataset) -> Predictor<'a> {
        Predictor {
            model: &self.model,
            ps: &self.params,
            store: &self.store,
            team_graph: &self.team_graph,
            ds,
        }
    }
}

/// Pretraining examples: the graphs of the training matches.
pub fn pretrain_examples<'a>(ds: &Dataset, graphs: &'a BTreeMap<MatchId, CachedGraph>) -> Result<Vec<PretrainExample<'a>>> {
    ds.train()
        .map(|m| {
            let graph = graphs
                .get(&m.match_id)
                .ok_or_else(|| Error::data(format!("no graph for training match {}", m.match_id)))?;
            Ok(PretrainExample { graph, label: m.label })
        })
        .collect()
}

pub fn team_graph_of(ds: &Dataset) -> TeamGraph {
    build_team_graph(ds.train(), ds.teams())
}

/// Pretrains the player encoders, freezes them into an embedding store and
/// trains the rest.
pub fn train_all(config: &TrainConfig, ds: &Dataset, graphs: &BTreeMap<MatchId, CachedGraph>) -> Result<Trained> {
    let team_graph = team_graph_of(ds);
    let (model, mut params) = Model::new(config, team_graph.teams.clone())?;
    let examples = pretrain_examples(ds, graphs)?;
    let stage1 = stage1_pretrain(&model, &mut params, &examples)?;
    let store = precompute_embeddings(&model, &params, graphs)?;
    let stage2 = stage2_train(&model, &mut params, &store, &team_graph, ds)?;
    Ok(Trained {
        model,
        params,
        store,
        team_graph,
        stage1,
        stage2,
    })
}
