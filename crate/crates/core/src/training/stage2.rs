use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{cross_entropy_on_tape, mse_on_tape, weighted_sampler, EmbeddingStore, LossMode, RngState};
use crate::autograd::Tape;
use crate::data::{Dataset, Outcome};
use crate::error::{Error, Result};
use crate::graph::TeamGraph;
use crate::match_net::outcome_to_target;
use crate::model::{match_inputs, MatchInputs, Model};
use crate::nn::{ParamGroup, ParamStore};
use crate::optim::Adam;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stage2Report {
    pub steps: usize,
    pub losses: Vec<f64>,
    pub grad_norms: Vec<f64>,
    /// Largest absolute gradient entry seen on any frozen parameter, per
    /// step.
    pub frozen_grad_max: Vec<f64>,
    pub rng: Option<RngState>,
}

const STREAM: u64 = 2;

pub const STAGE2_GROUPS: [ParamGroup; 4] = [
    ParamGroup::Gate,
    ParamGroup::TeamEmbeddings,
    ParamGroup::TeamEncoder,
    ParamGroup::MatchNet,
];

/// Trains gate, team path and match comparison on the training split with
/// the player encoders frozen. Gradients reaching frozen groups are recorded
/// every step.
pub fn stage2_train(model: &Model, ps: &mut ParamStore, store: &EmbeddingStore, team_graph: &TeamGraph, ds: &Dataset) -> Result<Stage2Report> {
    let cfg = &model.config;
    let examples: Vec<(MatchInputs, Outcome)> = ds
        .train()
        .map(|m| Ok((match_inputs(ds, m, cfg.history, cfg.history_scope, &BTreeMap::new())?, m.label)))
        .collect::<Result<_>>()?;
    let labels: Vec<Outcome> = examples.iter().map(|e| e.1).collect();
    let sampler = weighted_sampler(&labels, cfg.sampler_stage2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(STREAM);
    let trainable = ps.ids_in(&STAGE2_GROUPS);
    let frozen: Vec<_> = ps.iter().map(|(id, _)| id).filter(|id| !trainable.contains(id)).collect();
    let mut adam = Adam::new(cfg.adam(), trainable);
    let mut last_good = ps.clone();
    let mut report = Stage2Report::default();

    for step in 0..cfg.stage2_steps {
        let batch = sampler.sample(&mut rng, cfg.batch_size);
        let mut t = Tape::new();
        let rep = model.team_representation(&mut t, ps, team_graph)?;
        let mut terms = Vec::with_capacity(batch.len());
        for &i in &batch {
            let (inputs, label) = &examples[i];
            let rows = model.team_rows(&mut t, rep, team_graph, inputs.home_team, inputs.away_team)?;
            let f = model.forward_match(&mut t, ps, store, inputs, rows)?;
            terms.push(match cfg.loss_mode {
                LossMode::MseTargets => mse_on_tape(&mut t, f.output, outcome_to_target(*label)),
                LossMode::CrossEntropy => cross_entropy_on_tape(&mut t, f.output, *label),
            });
        }
        let all = t.concat_rows(&terms);
        let sum = t.sum_all(all);
        let loss = t.scale(sum, 1.0 / batch.len() as f64);
        let value = t.value(loss)[[0, 0]];
        if !value.is_finite() {
            *ps = last_good;
            return Err(Error::Diverged {
                step,
                message: format!("stage 2 loss {value}"),
            });
        }
        let mut grads = t.backward(loss);
        let frozen_max = frozen
            .iter()
            .filter_map(|id| grads.get(*id))
            .flat_map(|g| g.iter().map(|x| x.abs()))
            .fold(0.0, f64::max);
        report.frozen_grad_max.push(frozen_max);
        report.grad_norms.push(grads.clip_global_norm(cfg.clip_norm));
        report.losses.push(value);
        last_good.clone_from(ps);
        adam.step(ps, &grads);
        report.steps += 1;
    }
    report.rng = Some(RngState::capture(&rng));
    Ok(report)
}
