//! History pooling, the match comparison transformer and the outcome head.

use std::collections::HashMap;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::autograd::{Mat, Tape, Var};
use crate::data::{MatchId, Outcome, PlayerId, Side};
use crate::error::{Error, Result};
use crate::nn::{Activation, Init, LayerOutput, Mlp, ParamId, ParamStore, TransformerLayer};

/// Cut points on the home-win score: `[0, lower)` lose, `[lower, upper)` draw,
/// `[upper, 1]` win. A value exactly on a cut goes to the higher class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub lower: f64,
    pub upper: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds::SEVENTHS
    }
}

impl Thresholds {
    pub const SEVENTHS: Thresholds = Thresholds {
        lower: 4.0 / 7.0,
        upper: 5.0 / 7.0,
    };
    pub const FIFTHS: Thresholds = Thresholds {
        lower: 2.0 / 5.0,
        upper: 3.0 / 5.0,
    };
    pub const THIRDS: Thresholds = Thresholds {
        lower: 1.0 / 3.0,
        upper: 2.0 / 3.0,
    };

    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(0.0 < lower && lower <= upper && upper < 1.0) {
            return Err(Error::config(format!(
                "thresholds must satisfy 0 < lower <= upper < 1, got {lower}, {upper}"
            )));
        }
        Ok(Thresholds { lower, upper })
    }

    /// Accepts `sevenths`, `fifths`, `thirds` or `LOWER,UPPER`.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sevenths" => Ok(Self::SEVENTHS),
            "fifths" => Ok(Self::FIFTHS),
            "thirds" => Ok(Self::THIRDS),
            other => {
                let (a, b) = other
                    .split_once(',')
                    .ok_or_else(|| Error::config(format!("unknown threshold set {other:?}")))?;
                let parse = |x: &str| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::config(format!("threshold {x:?}: {e}")))
                };
                Thresholds::new(parse(a)?, parse(b)?)
            }
        }
    }

    pub fn classify(&self, y_hat: f64) -> Result<Outcome> {
        if !(0.0..=1.0).contains(&y_hat) {
            return Err(Error::Domain(format!("score {y_hat} outside [0, 1]")));
        }
        Ok(if y_hat < self.lower {
            Outcome::Lose
        } else if y_hat < self.upper {
            Outcome::Draw
        } else {
            Outcome::Win
        })
    }
}

/// Classifies with the default 4/7, 5/7 cuts.
pub fn classify(y_hat: f64) -> Result<Outcome> {
    Thresholds::default().classify(y_hat)
}

/// Home-perspective regression target.
pub fn outcome_to_target(label: Outcome) -> f64 {
    match label {
        Outcome::Win => 1.0,
        Outcome::Draw => 0.5,
        Outcome::Lose => 0.0,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PooledPlayerEmbedding {
    pub player: PlayerId,
    pub side: Side,
    pub vector: Array1<f64>,
    pub history_length: usize,
}

/// One rostered player and the ids of their past matches, oldest first.
#[derive(Clone, Debug, PartialEq)]
pub struct RosterEntry {
    pub player: PlayerId,
    pub side: Side,
    pub history: Vec<MatchId>,
}

/// Mean of each player's embeddings over their last `capacity` history
/// entries. Players without history, or whose entries are all missing from
/// `embeddings`, get the zero vector.
pub fn pool_history(
    embeddings: &HashMap<(PlayerId, MatchId), Array1<f64>>,
    roster: &[RosterEntry],
    capacity: usize,
    width: usize,
) -> Vec<PooledPlayerEmbedding> {
    roster
        .iter()
        .map(|r| {
            let start = r.history.len().saturating_sub(capacity);
            let found: Vec<&Array1<f64>> = r.history[start..]
                .iter()
                .filter_map(|m| embeddings.get(&(r.player, *m)))
                .collect();
            let mut vector = Array1::zeros(width);
            for e in &found {
                vector += *e;
            }
            if !found.is_empty() {
                vector /= found.len() as f64;
            }
            PooledPlayerEmbedding {
                player: r.player,
                side: r.side,
                vector,
                history_length: found.len(),
            }
        })
        .collect()
}

/// Differentiable mean pooling: `rows` holds one embedding per (player, past
/// match) pair and `owner[i]` names the roster slot row `i` belongs to.
pub fn pool_rows(t: &mut Tape, rows: Var, owner: &[usize], players: usize) -> Var {
    let summed = t.scatter_add_rows(rows, owner, players);
    let mut counts = vec![0usize; players];
    for &o in owner {
        counts[o] += 1;
    }
    let inv = Array2::from_shape_fn((players, 1), |(i, _)| {
        if counts[i] == 0 {
            0.0
        } else {
            1.0 / counts[i] as f64
        }
    });
    let inv = t.constant(inv);
    t.mul_col(summed, inv)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchNetConfig {
    pub width: usize,
    pub heads: usize,
    pub ff_mult: usize,
    /// Hidden width of the head; `None` is a single linear layer.
    pub head_hidden: Option<usize>,
    /// 1 for the regression head, 3 for class logits.
    pub outputs: usize,
}

impl Default for MatchNetConfig {
    fn default() -> Self {
        MatchNetConfig {
            width: 16,
            heads: 4,
            ff_mult: 2,
            head_hidden: None,
            outputs: 1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatchNet {
    pub config: MatchNetConfig,
    pub layer: TransformerLayer,
    pub head: Mlp,
    pub no_history: ParamId,
}

/// Tape handles for one forward pass over a match.
pub struct MatchForward {
    /// `1 x outputs`: the home-win probability, or class logits in
    /// `[win, draw, lose]` order.
    pub output: Var,
    pub r: Var,
    pub b: Var,
    pub z_match: Var,
    pub attention: Vec<Var>,
    /// Input row of each `z_match` row.
    pub order: Vec<usize>,
}

/// Row order fed to the comparison layer: home before away, then players
/// with history before cold starts, then by the pooled values themselves.
/// Rows that tie are identical, so the result does not depend on how the
/// roster was listed and reordering a side leaves the output bit-for-bit
/// unchanged.
pub fn canonical_order(pooled: &Mat, history_lengths: &[usize], sides: &[Side]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..sides.len()).collect();
    order.sort_by(|&a, &b| {
        (sides[a].index(), history_lengths[a] == 0)
            .cmp(&(sides[b].index(), history_lengths[b] == 0))
            .then_with(|| {
                pooled
                    .row(a)
                    .iter()
                    .zip(pooled.row(b).iter())
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    });
    order
}

impl MatchNet {
    pub fn new(init: &mut Init<'_>, config: MatchNetConfig) -> Self {
        let w = config.width;
        let dims: Vec<usize> = match config.head_hidden {
            Some(h) => vec![w, h, config.outputs],
            None => vec![w, config.outputs],
        };
        MatchNet {
            config,
            layer: TransformerLayer::new(init, "compare", w, config.heads, config.ff_mult),
            head: Mlp::new(init, "head", &dims, Activation::Gelu),
            no_history: init.normal("no_history", 1, w, 0.02),
        }
    }

    /// Adds each player's team embedding and the cold-start indicator, then
    /// runs the comparison layer. Output rows follow input rows.
    pub fn compare_match(
        &self,
        t: &mut Tape,
        ps: &ParamStore,
        pooled: Var,
        history_lengths: &[usize],
        sides: &[Side],
        team_rows: Option<(Var, Var)>,
    ) -> Result<LayerOutput> {
        let (n, w) = t.shape(pooled);
        if w != self.config.width {
            return Err(Error::config(format!(
                "pooled width {w} does not match comparison width {}",
                self.config.width
            )));
        }
        if n != sides.len() || n != history_lengths.len() {
            return Err(Error::LengthMismatch {
                left: n,
                right: sides.len(),
            });
        }
        let mut x = pooled;
        if history_lengths.contains(&0) {
            let ind = Array2::from_shape_fn((n, 1), |(i, _)| (history_lengths[i] == 0) as u8 as f64);
            let ind = t.constant(ind);
            let nh = t.param(self.no_history, ps.get(self.no_history));
            let add = t.matmul(ind, nh);
            x = t.add(x, add);
        }
        if let Some((home, away)) = team_rows {
            for v in [home, away] {
                if t.shape(v) != (1, w) {
                    return Err(Error::config(format!(
                        "team embedding shape {:?}, expected (1, {w})",
                        t.shape(v)
                    )));
                }
            }
            let both = t.concat_rows(&[home, away]);
            let idx: Vec<usize> = sides.iter().map(|s| s.index()).collect();
            let rows = t.gather_rows(both, &idx);
            x = t.add(x, rows);
        }
        Ok(self.layer.forward(t, ps, x))
    }

    /// Mean of home rows minus mean of away rows through the head.
    pub fn predict(&self, t: &mut Tape, ps: &ParamStore, z_match: Var, sides: &[Side]) -> Result<(Var, Var, Var)> {
        let home: Vec<usize> = (0..sides.len()).filter(|&i| sides[i] == Side::Home).collect();
        let away: Vec<usize> = (0..sides.len()).filter(|&i| sides[i] == Side::Away).collect();
        if home.is_empty() || away.is_empty() {
            return Err(Error::Prediction("each side needs at least one player".into()));
        }
        let hr = t.gather_rows(z_match, &home);
        let r = t.mean_rows(hr);
        let ar = t.gather_rows(z_match, &away);
        let b = t.mean_rows(ar);
        let diff = t.sub(r, b);
        let out = self.head.forward(t, ps, diff);
        let out = if self.config.outputs == 1 { t.sigmoid(out) } else { out };
        Ok((out, r, b))
    }

    pub fn forward(
        &self,
        t: &mut Tape,
        ps: &ParamStore,
        pooled: Var,
        history_lengths: &[usize],
        sides: &[Side],
        team_rows: Option<(Var, Var)>,
    ) -> Result<MatchForward> {
        if t.shape(pooled).0 != sides.len() || sides.len() != history_lengths.len() {
            return Err(Error::LengthMismatch {
                left: t.shape(pooled).0,
                right: sides.len(),
            });
        }
        let order = canonical_order(t.value(pooled), history_lengths, sides);
        let x = t.gather_rows(pooled, &order);
        let lengths: Vec<usize> = order.iter().map(|&i| history_lengths[i]).collect();
        let sides: Vec<Side> = order.iter().map(|&i| sides[i]).collect();
        let layer = self.compare_match(t, ps, x, &lengths, &sides, team_rows)?;
        let (output, r, b) = self.predict(t, ps, layer.hidden, &sides)?;
        Ok(MatchForward {
            output,
            r,
            b,
            z_match: layer.hidden,
            attention: layer.attention,
            order,
        })
    }
}

/// Prediction for one fixture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchPrediction {
    pub y_hat: f64,
    pub outcome_class: Outcome,
    /// `[win, draw, lose]` when the head emits class logits.
    pub probabilities: Option<[f64; 3]>,
    pub r: Vec<f64>,
    pub b: Vec<f64>,
}

impl MatchPrediction {
    pub fn from_forward(t: &Tape, f: &MatchForward, thresholds: &Thresholds) -> Result<Self> {
        let out = t.value(f.output);
        let (y_hat, outcome_class, probabilities) = if out.ncols() == 1 {
            let y = out[[0, 0]];
            if !y.is_finite() {
                return Err(Error::Numeric(format!("non-finite prediction {y}")));
            }
            (y, thresholds.classify(y)?, None)
        } else {
            let p = softmax3(out.row(0).iter().copied());
            let best = (0..3).fold(0, |b, i| if p[i] > p[b] { i } else { b });
            (p[0] + 0.5 * p[1], Outcome::TABLE_ORDER[best], Some(p))
        };
        Ok(MatchPrediction {
            y_hat,
            outcome_class,
            probabilities,
            r: t.value(f.r).iter().copied().collect(),
            b: t.value(f.b).iter().copied().collect(),
        })
    }

    pub fn r_norm(&self) -> f64 {
        self.r.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn b_norm(&self) -> f64 {
        self.b.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

fn softmax3(logits: impl Iterator<Item = f64>) -> [f64; 3] {
    let v: Vec<f64> = logits.collect();
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let s: f64 = e.iter().sum();
    [e[0] / s, e[1] / s, e[2] / s]
}

/// Stacks pooled vectors into a matrix in roster order.
pub fn pooled_matrix(pooled: &[PooledPlayerEmbedding], width: usize) -> Mat {
    let mut m = Array2::zeros((pooled.len(), width));
    for (i, p) in pooled.iter().enumerate() {
        m.row_mut(i).assign(&p.vector);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ParamGroup;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn classify_examples() {
        assert_eq!(classify(0.30).unwrap(), Outcome::Lose);
        assert_eq!(classify(0.60).unwrap(), Outcome::Draw);
        assert_eq!(classify(0.90).unwrap(), Outcome::Win);
        assert_eq!(classify(4.0 / 7.0).unwrap(), Outcome::Draw);
        assert_eq!(classify(5.0 / 7.0).unwrap(), Outcome::Win);
        assert_eq!(classify(0.0).unwrap(), Outcome::Lose);
        assert_eq!(classify(1.0).unwrap(), Outcome::Win);
        assert!(matches!(classify(1.01), Err(Error::Domain(_))));
        assert!(matches!(classify(f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn targets() {
        assert_eq!(outcome_to_target(Outcome::Win), 1.0);
        assert_eq!(outcome_to_target(Outcome::Draw), 0.5);
        assert_eq!(outcome_to_target(Outcome::Lose), 0.0);
        for o in [Outcome::Win, Outcome::Lose] {
            assert_eq!(classify(outcome_to_target(o)).unwrap(), o);
        }
    }

    #[test]
    fn threshold_parsing() {
        assert_eq!(Thresholds::parse("fifths").unwrap(), Thresholds::FIFTHS);
        assert_eq!(Thresholds::parse("0.3, 0.6").unwrap(), Thresholds::new(0.3, 0.6).unwrap());
        assert!(Thresholds::parse("0.7,0.2").is_err());
        assert!(Thresholds::parse("quarters").is_err());
    }

    #[test]
    fn pooling_mean_and_cold_start() {
        let mut emb = HashMap::new();
        let p = PlayerId(1);
        for (m, v) in [(1, [1.0, 2.0]), (2, [3.0, 4.0]), (3, [5.0, 0.0])] {
            emb.insert((p, MatchId(m)), Array1::from(v.to_vec()));
        }
        let roster = vec![
            RosterEntry {
                player: p,
                side: Side::Home,
                history: vec![MatchId(1), MatchId(2), MatchId(3)],
            },
            RosterEntry {
                player: PlayerId(2),
                side: Side::Away,
                history: vec![],
            },
        ];
        let pooled = pool_history(&emb, &roster, 2, 2);
        assert_eq!(pooled[0].vector.to_vec(), vec![4.0, 2.0]);
        assert_eq!(pooled[0].history_length, 2);
        assert_eq!(pooled[1].vector.to_vec(), vec![0.0, 0.0]);
        assert_eq!(pooled[1].history_length, 0);
    }

    #[test]
    fn tape_pooling_matches_plain_mean() {
        let mut t = Tape::new();
        let rows = t.constant(ndarray::array![[1.0, 2.0], [3.0, 4.0], [10.0, 10.0]]);
        let pooled = pool_rows(&mut t, rows, &[0, 0, 2], 3);
        assert_eq!(t.value(pooled), &ndarray::array![[2.0, 3.0], [0.0, 0.0], [10.0, 10.0]]);
    }

    #[test]
    fn equal_sides_give_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut ps = ParamStore::new();
        let net = MatchNet::new(&mut Init::new(&mut ps, &mut rng, ParamGroup::MatchNet), MatchNetConfig::default());
        let mut t = Tape::new();
        let z = t.constant(Array2::from_elem((4, 16), 0.3));
        let sides = [Side::Home, Side::Home, Side::Away, Side::Away];
        let (y, r, b) = net.predict(&mut t, &ps, z, &sides).unwrap();
        assert_eq!(t.value(r), t.value(b));
        let mut t2 = Tape::new();
        let zero = t2.constant(Array2::zeros((1, 16)));
        let h = net.head.forward(&mut t2, &ps, zero);
        let y0 = t2.sigmoid(h);
        assert_eq!(t.value(y)[[0, 0]], t2.value(y0)[[0, 0]]);
        assert!(matches!(
            net.predict(&mut t, &ps, z, &[Side::Home; 4]),
            Err(Error::Prediction(_))
        ));
    }
}
