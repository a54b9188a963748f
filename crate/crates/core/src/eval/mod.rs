//! Accuracy reports, role-grouped attention and substitution analysis.

mod accuracy;
mod attention;
mod substitution;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use accuracy::{per_class_accuracy, AccuracyReport, ClassAccuracy};
pub use attention::{
    accumulate_groups, attention_role_matrix, finish_groups, group_label, player_attention, role_group, RoleAttentionMatrix, GROUPS,
};
pub use substitution::{substitution_analysis, team_test_fixtures, Distribution, Substitution, SubstitutionReport, SubstitutionRow};

use crate::data::{Dataset, DivisionId, MatchId, Outcome, PlayerId};
use crate::error::Result;
use crate::graph::TeamGraph;
use crate::match_net::MatchPrediction;
use crate::model::{match_inputs, Model};
use crate::nn::ParamStore;
use crate::training::EmbeddingStore;

/// A trained model together with everything needed to score dataset
/// fixtures.
#[derive(Clone, Copy)]
pub struct Predictor<'a> {
    pub model: &'a Model,
    pub ps: &'a ParamStore,
    pub store: &'a EmbeddingStore,
    pub team_graph: &'a TeamGraph,
    pub ds: &'a Dataset,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixturePrediction {
    pub match_id: MatchId,
    pub division: DivisionId,
    pub label: Outcome,
    pub prediction: MatchPrediction,
}

impl<'a> Predictor<'a> {
    pub fn predict_fixture(&self, id: MatchId, overrides: &BTreeMap<PlayerId, PlayerId>) -> Result<MatchPrediction> {
        let cfg = &self.model.config;
        let record = self.ds.match_record(id)?;
        let inputs = match_inputs(self.ds, record, cfg.history, cfg.history_scope, overrides)?;
        self.model.predict(self.ps, self.store, self.team_graph, &inputs)
    }

    pub fn predict_all(&self, ids: &[MatchId]) -> Result<Vec<FixturePrediction>> {
        ids.iter()
            .map(|&id| {
                let record = self.ds.match_record(id)?;
                Ok(FixturePrediction {
                    match_id: id,
                    division: record.division.clone(),
                    label: record.label,
                    prediction: self.predict_fixture(id, &BTreeMap::new())?,
                })
            })
            .collect()
    }

    pub fn accuracy(&self, ids: &[MatchId]) -> Result<AccuracyReport> {
        report_from(&self.predict_all(ids)?)
    }
}

pub fn report_from(preds: &[FixturePrediction]) -> Result<AccuracyReport> {
    let p: Vec<Outcome> = preds.iter().map(|f| f.prediction.outcome_class).collect();
    let l: Vec<Outcome> = preds.iter().map(|f| f.label).collect();
    let d: Vec<DivisionId> = preds.iter().map(|f| f.division.clone()).collect();
    per_class_accuracy(&p, &l, &d)
}
