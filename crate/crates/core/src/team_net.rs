//! Team embeddings refined by a homogeneous GAT over the winning-rate graph.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::autograd::{Mat, Tape, Var};
use crate::data::TeamId;
use crate::error::{Error, Result};
use crate::graph::TeamGraph;
use crate::nn::{Init, ParamGroup, ParamId, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TeamNetConfig {
    pub embedding: usize,
    pub hidden: usize,
    pub output: usize,
    pub layers: usize,
    pub leaky_slope: f64,
    /// Add `beta * winning_rate` to edge logits.
    pub rate_bias: bool,
}

impl Default for TeamNetConfig {
    fn default() -> Self {
        TeamNetConfig {
            embedding: 64,
            hidden: 64,
            output: 16,
            layers: 3,
            leaky_slope: 0.2,
            rate_bias: true,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TeamGatLayer {
    pub weight: ParamId,
    pub attn_dst: ParamId,
    pub attn_src: ParamId,
    pub rate_scale: ParamId,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TeamNet {
    pub config: TeamNetConfig,
    pub teams: Vec<TeamId>,
    pub table: ParamId,
    pub layers: Vec<TeamGatLayer>,
}

impl TeamNet {
    /// One embedding row per entry of `teams`, which must be sorted.
    pub fn new(store: &mut ParamStore, rng: &mut rand_chacha::ChaCha8Rng, config: TeamNetConfig, teams: Vec<TeamId>) -> Self {
        assert!(teams.windows(2).all(|w| w[0] < w[1]), "team ids must be sorted and unique");
        let table = Init::new(store, rng, ParamGroup::TeamEmbeddings).normal("table", teams.len(), config.embedding, 0.1);
        let mut init = Init::new(store, rng, ParamGroup::TeamEncoder);
        let mut dims = vec![config.embedding];
        dims.extend(std::iter::repeat_n(config.hidden, config.layers.saturating_sub(1)));
        dims.push(config.output);
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                init.scoped(&format!("layer{l}"), |init| TeamGatLayer {
                    weight: init.uniform("weight", w[0], w[1]),
                    attn_dst: init.uniform("attn_dst", w[1], 1),
                    attn_src: init.uniform("attn_src", w[1], 1),
                    rate_scale: init.ones("rate_scale", 1, 1),
                })
            })
            .collect();
        TeamNet {
            config,
            teams,
            table,
            layers,
        }
    }

    pub fn index_of(&self, team: TeamId) -> Option<usize> {
        self.teams.binary_search(&team).ok()
    }

    /// Encodes every team; row `i` belongs to `graph.teams[i]`.
    pub fn encode_teams(&self, t: &mut Tape, ps: &ParamStore, graph: &TeamGraph) -> Result<Var> {
        if let Some(missing) = graph.teams.iter().find(|id| self.index_of(**id).is_none()) {
            return Err(Error::config(format!("team {missing} has no embedding row")));
        }
        let rows: Vec<usize> = graph.teams.iter().map(|id| self.index_of(*id).expect("checked")).collect();
        let table = t.param(self.table, ps.get(self.table));
        let mut h = t.gather_rows(table, &rows);
        let n = graph.len();
        // Entries are (dst, src, rate); self-loops last with no rate.
        let mut entries: Vec<(usize, usize, f64)> = graph.edges.iter().map(|e| (e.dst, e.src, e.winning_rate)).collect();
        let n_edges = entries.len();
        entries.extend((0..n).map(|v| (v, v, 0.0)));
        let dst: Vec<usize> = entries.iter().map(|e| e.0).collect();
        let src: Vec<usize> = entries.iter().map(|e| e.1).collect();
        let rates = Array2::from_shape_fn((entries.len(), 1), |(i, _)| entries[i].2);
        for layer in &self.layers {
            let w = t.param(layer.weight, ps.get(layer.weight));
            let wh = t.matmul(h, w);
            let ad = t.param(layer.attn_dst, ps.get(layer.attn_dst));
            let as_ = t.param(layer.attn_src, ps.get(layer.attn_src));
            let sd = t.matmul(wh, ad);
            let ss = t.matmul(wh, as_);
            let ed = t.gather_rows(sd, &dst);
            let es = t.gather_rows(ss, &src);
            let e = t.add(ed, es);
            let mut e = t.leaky_relu(e, self.config.leaky_slope);
            if self.config.rate_bias && n_edges > 0 {
                let beta = t.param(layer.rate_scale, ps.get(layer.rate_scale));
                let r = t.constant(rates.clone());
                let bias = t.matmul(r, beta);
                e = t.add(e, bias);
            }
            let alpha = t.segment_softmax(e, &dst, n);
            let m = t.gather_rows(wh, &src);
            let m = t.mul_col(m, alpha);
            let agg = t.scatter_add_rows(m, &dst, n);
            h = t.elu(agg);
        }
        if t.value(h).iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("team encoder produced non-finite output".into()));
        }
        Ok(h)
    }
}

/// Rows of the two competing teams.
pub fn lookup_match_teams(t: &mut Tape, rep: Var, graph: &TeamGraph, home: TeamId, away: TeamId) -> Result<(Var, Var)> {
    let h = graph.index_of(home).ok_or(Error::UnknownTeam(home))?;
    let a = graph.index_of(away).ok_or(Error::UnknownTeam(away))?;
    Ok((t.slice_rows(rep, h, 1), t.slice_rows(rep, a, 1)))
}

/// Plain-matrix form of [`lookup_match_teams`].
pub fn lookup_rows(rep: &Mat, graph: &TeamGraph, home: TeamId, away: TeamId) -> Result<(Mat, Mat)> {
    let h = graph.index_of(home).ok_or(Error::UnknownTeam(home))?;
    let a = graph.index_of(away).ok_or(Error::UnknownTeam(away))?;
    Ok((rep.slice(ndarray::s![h..h + 1, ..]).to_owned(), rep.slice(ndarray::s![a..a + 1, ..]).to_owned()))
}
