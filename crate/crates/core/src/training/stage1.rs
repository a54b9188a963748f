use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{mse_on_tape, weighted_sampler, RngState};
use crate::autograd::{Tape, Var};
use crate::data::Outcome;
use crate::error::{Error, Result};
use crate::graph::CachedGraph;
use crate::match_net::outcome_to_target;
use crate::model::Model;
use crate::nn::{ParamGroup, ParamStore};
use crate::optim::Adam;
use crate::player_net::GlobalMode;

/// One pretraining graph with its home-perspective label.
#[derive(Clone, Copy)]
pub struct PretrainExample<'a> {
    pub graph: &'a CachedGraph,
    pub label: Outcome,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stage1Report {
    pub steps: usize,
    /// Mean batch loss per step of each path.
    pub global_losses: Vec<f64>,
    pub local_losses: Vec<f64>,
    pub grad_norms: Vec<f64>,
    pub rng: Option<RngState>,
}

const STREAM: u64 = 1;

/// Graph-level readouts of both experts: class token for the global path,
/// mean-pooled nodes for the local path. Either is `None` when disabled.
fn readouts(model: &Model, t: &mut Tape, ps: &ParamStore, cg: &CachedGraph) -> Result<(Option<Var>, Option<Var>)> {
    let cfg = &model.config;
    let global = if cfg.use_global {
        let tokens = model.player.augment_tokens(t, ps, &cg.graph, &cg.ids)?;
        let cls = model.player.encode_global(t, ps, &tokens, GlobalMode::ClassToken, true)?;
        let h = model.heads.global.forward(t, ps, cls.output);
        Some(t.sigmoid(h))
    } else {
        None
    };
    let local = if cfg.use_local {
        let z = model.player.encode_local(t, ps, &cg.graph)?;
        let pooled = t.mean_rows(z);
        let h = model.heads.local.forward(t, ps, pooled);
        Some(t.sigmoid(h))
    } else {
        None
    };
    Ok((global, local))
}

/// Pretrains both player encoders against match targets. The two paths share
/// no parameters, so one optimizer over their union trains them separately.
/// On a non-finite loss the parameters are restored to the last finite state
/// and a divergence error is returned.
pub fn stage1_pretrain(model: &Model, ps: &mut ParamStore, examples: &[PretrainExample<'_>]) -> Result<Stage1Report> {
    let cfg = &model.config;
    let mut report = Stage1Report::default();
    if !cfg.use_player_net || cfg.stage1_steps == 0 {
        return Ok(report);
    }
    let labels: Vec<Outcome> = examples.iter().map(|e| e.label).collect();
    let sampler = weighted_sampler(&labels, cfg.sampler_stage1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(STREAM);
    let mut groups = ParamGroup::PLAYER_ENCODERS.to_vec();
    groups.push(ParamGroup::PretrainHeads);
    let mut adam = Adam::new(cfg.adam(), ps.ids_in(&groups));
    let mut last_good = ps.clone();

    for step in 0..cfg.stage1_steps {
        let batch = sampler.sample(&mut rng, cfg.batch_size);
        let mut t = Tape::new();
        let mut g_terms = Vec::new();
        let mut l_terms = Vec::new();
        for &i in &batch {
            let ex = examples[i];
            let target = outcome_to_target(ex.label);
            let (g, l) = readouts(model, &mut t, ps, ex.graph)?;
            if let Some(g) = g {
                g_terms.push(mse_on_tape(&mut t, g, target));
            }
            if let Some(l) = l {
                l_terms.push(mse_on_tape(&mut t, l, target));
            }
        }
        let scale = 1.0 / batch.len() as f64;
        let mean = |t: &mut Tape, terms: &[Var]| -> Option<Var> {
            if terms.is_empty() {
                return None;
            }
            let all = t.concat_rows(terms);
            let s = t.sum_all(all);
            Some(t.scale(s, scale))
        };
        let g_loss = mean(&mut t, &g_terms);
        let l_loss = mean(&mut t, &l_terms);
        let total = match (g_loss, l_loss) {
            (Some(a), Some(b)) => t.add(a, b),
            (Some(a), None) | (None, Some(a)) => a,
            (None, None) => unreachable!("at least one expert is enabled"),
        };
        let value = t.value(total)[[0, 0]];
        if !value.is_finite() {
            *ps = last_good;
            return Err(Error::Diverged {
                step,
                message: format!("stage 1 loss {value}"),
            });
        }
        let mut grads = t.backward(total);
        report.grad_norms.push(grads.clip_global_norm(cfg.clip_norm));
        report.global_losses.push(g_loss.map_or(f64::NAN, |v| t.value(v)[[0, 0]]));
        report.local_losses.push(l_loss.map_or(f64::NAN, |v| t.value(v)[[0, 0]]));
        last_good.clone_from(ps);
        adam.step(ps, &grads);
        report.steps += 1;
    }
    report.rng = Some(RngState::capture(&rng));
    Ok(report)
}

/// Mean squared error of the global and local readouts over all examples.
pub fn pretrain_losses(model: &Model, ps: &ParamStore, examples: &[PretrainExample<'_>]) -> Result<(f64, f64)> {
    let (mut g_sum, mut l_sum) = (0.0, 0.0);
    for ex in examples {
        let target = outcome_to_target(ex.label);
        let mut t = Tape::new();
        let (g, l) = readouts(model, &mut t, ps, ex.graph)?;
        g_sum += g.map_or(f64::NAN, |v| super::mse_loss(target, t.value(v)[[0, 0]]));
        l_sum += l.map_or(f64::NAN, |v| super::mse_loss(target, t.value(v)[[0, 0]]));
    }
    let n = examples.len().max(1) as f64;
    Ok((g_sum / n, l_sum / n))
}
