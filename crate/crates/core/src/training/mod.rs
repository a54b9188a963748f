//! Losses, the class-balancing sampler and the two training stages.

mod checkpoint;
mod config;
mod stage1;
mod stage2;
mod store;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

pub use checkpoint::{encoder_hash, Checkpoint, RngState, Stage, TrainedSteps};
pub use config::{LossMode, TrainConfig};
pub use stage1::{pretrain_losses, stage1_pretrain, PretrainExample, Stage1Report};
pub use stage2::{stage2_train, Stage2Report, STAGE2_GROUPS};
pub use store::{precompute_embeddings, EmbeddingStore};

use crate::autograd::{Tape, Var};
use crate::data::Outcome;
use crate::error::{Error, Result};

pub fn mse_loss(y: f64, y_hat: f64) -> f64 {
    (y - y_hat) * (y - y_hat)
}

/// `(target - prediction)^2` for a `1 x 1` prediction.
pub fn mse_on_tape(t: &mut Tape, prediction: Var, target: f64) -> Var {
    let y = t.scalar(target);
    let d = t.sub(prediction, y);
    t.square(d)
}

/// Negative log-likelihood of `label` under `1 x 3` logits in `[win, draw,
/// lose]` order.
pub fn cross_entropy_on_tape(t: &mut Tape, logits: Var, label: Outcome) -> Var {
    let ls = t.log_softmax_rows(logits);
    let pick = t.slice_cols(ls, label.table_index(), 1);
    t.scale(pick, -1.0)
}

/// Per-class weights `1 / frequency`, indexed `[win, draw, lose]`; absent
/// classes get 0.
pub fn class_weights(labels: &[Outcome]) -> [f64; 3] {
    let mut counts = [0usize; 3];
    for l in labels {
        counts[l.table_index()] += 1;
    }
    counts.map(|c| if c == 0 { 0.0 } else { 1.0 / c as f64 })
}

/// Draws example indices with replacement.
#[derive(Clone, Debug)]
pub struct WeightedSampler {
    weights: Vec<f64>,
    dist: WeightedIndex<f64>,
}

impl WeightedSampler {
    /// Weight of each example is `1 / frequency` of its class.
    pub fn balanced(labels: &[Outcome]) -> Result<Self> {
        let cw = class_weights(labels);
        Self::from_weights(labels.iter().map(|l| cw[l.table_index()]).collect())
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::from_weights(vec![1.0; n])
    }

    fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::data("cannot sample from an empty training set"));
        }
        let dist = WeightedIndex::new(&weights).map_err(|e| Error::data(e.to_string()))?;
        Ok(WeightedSampler { weights, dist })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sample<R: Rng>(&self, rng: &mut R, n: usize) -> Vec<usize> {
        (0..n).map(|_| self.dist.sample(rng)).collect()
    }
}

/// Balanced or uniform sampler per the stage flag.
pub fn weighted_sampler(labels: &[Outcome], balanced: bool) -> Result<WeightedSampler> {
    if balanced {
        WeightedSampler::balanced(labels)
    } else {
        WeightedSampler::uniform(labels.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mse_examples() {
        assert_eq!(mse_loss(0.3, 0.3), 0.0);
        assert_eq!(mse_loss(1.0, 0.5), 0.25);
        assert_eq!(mse_loss(0.0, 1.0), 1.0);
    }

    #[test]
    fn training_histogram_weights() {
        let mut labels = vec![Outcome::Win; 695];
        labels.extend(vec![Outcome::Draw; 397]);
        labels.extend(vec![Outcome::Lose; 460]);
        let w = class_weights(&labels);
        assert_eq!(w, [1.0 / 695.0, 1.0 / 397.0, 1.0 / 460.0]);
    }

    #[test]
    fn balanced_labels_give_uniform_weights() {
        let labels = [Outcome::Win, Outcome::Draw, Outcome::Lose, Outcome::Lose, Outcome::Draw, Outcome::Win];
        let s = WeightedSampler::balanced(&labels).unwrap();
        assert!(s.weights().iter().all(|&w| w == s.weights()[0]));
        assert!(WeightedSampler::balanced(&[]).is_err());
    }

    #[test]
    fn cross_entropy_matches_direct_formula() {
        let mut t = Tape::new();
        let logits = t.constant(ndarray::array![[0.2, -1.0, 0.5]]);
        let l = cross_entropy_on_tape(&mut t, logits, Outcome::Draw);
        let z: f64 = [0.2f64, -1.0, 0.5].iter().map(|x| x.exp()).sum();
        assert!((t.value(l)[[0, 0]] - (z.ln() + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn sampler_is_seed_deterministic() {
        let labels = [Outcome::Win, Outcome::Win, Outcome::Lose];
        let s = WeightedSampler::balanced(&labels).unwrap();
        let a = s.sample(&mut ChaCha8Rng::seed_from_u64(4), 50);
        let b = s.sample(&mut ChaCha8Rng::seed_from_u64(4), 50);
        assert_eq!(a, b);
    }
}
