use std::collections::HashMap;

use ndarray::Zip;
use serde::{Deserialize, Serialize};

use crate::autograd::{Gradients, Mat};
use crate::nn::{ParamId, ParamStore};

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam restricted to an explicit set of trainable parameters. Gradients for
/// any other parameter are ignored.
pub struct Adam {
    config: AdamConfig,
    trainable: Vec<ParamId>,
    moments: HashMap<ParamId, (Mat, Mat)>,
    steps: usize,
}

impl Adam {
    pub fn new(config: AdamConfig, trainable: Vec<ParamId>) -> Self {
        Adam {
            config,
            trainable,
            moments: HashMap::new(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn trainable(&self) -> &[ParamId] {
        &self.trainable
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) {
        self.steps += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.steps as i32);
        let bc2 = 1.0 - beta2.powi(self.steps as i32);
        for &id in &self.trainable {
            let Some(g) = grads.get(id) else { continue };
            let (m, v) = self
                .moments
                .entry(id)
                .or_insert_with(|| (Mat::zeros(g.dim()), Mat::zeros(g.dim())));
            Zip::from(&mut *m).and(g).for_each(|m, &g| *m = beta1 * *m + (1.0 - beta1) * g);
            Zip::from(&mut *v)
                .and(g)
                .for_each(|v, &g| *v = beta2 * *v + (1.0 - beta2) * g * g);
            let p = store.get_mut(id);
            Zip::from(p).and(&*m).and(&*v).for_each(|p, &m, &v| {
                *p -= learning_rate * (m / bc1) / ((v / bc2).sqrt() + eps);
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Tape;
    use crate::nn::ParamGroup;
    use ndarray::array;

    #[test]
    fn minimizes_quadratic() {
        let mut ps = ParamStore::new();
        let id = ps.add("x", ParamGroup::Gate, array![[3.0, -2.0]]);
        let frozen = ps.add("y", ParamGroup::GlobalEncoder, array![[1.0]]);
        let mut adam = Adam::new(
            AdamConfig {
                learning_rate: 0.1,
                ..Default::default()
            },
            vec![id],
        );
        for _ in 0..500 {
            let mut t = Tape::new();
            let x = t.param(id, ps.get(id));
            let y = t.param(frozen, ps.get(frozen));
            let sq = t.square(x);
            let s = t.sum_all(sq);
            let l = t.mul(s, y);
            let g = t.backward(l);
            adam.step(&mut ps, &g);
        }
        assert!(ps.get(id).iter().all(|v| v.abs() < 1e-2));
        assert_eq!(ps.get(frozen)[[0, 0]], 1.0);
        assert_eq!(adam.steps(), 500);
    }
}
