//! Parameter storage and the small set of layers the encoders are built from.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autograd::{Mat, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(u32);

impl ParamId {
    pub fn from_raw(raw: u32) -> Self {
        ParamId(raw)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Named parameter groups; checkpoints, freezing and hashing work per group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    TypeTables,
    GlobalEncoder,
    LocalEncoder,
    Gate,
    TeamEmbeddings,
    TeamEncoder,
    MatchNet,
    PretrainHeads,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 8] = [
        ParamGroup::TypeTables,
        ParamGroup::GlobalEncoder,
        ParamGroup::LocalEncoder,
        ParamGroup::Gate,
        ParamGroup::TeamEmbeddings,
        ParamGroup::TeamEncoder,
        ParamGroup::MatchNet,
        ParamGroup::PretrainHeads,
    ];

    /// Groups produced by player pretraining and frozen afterwards.
    pub const PLAYER_ENCODERS: [ParamGroup; 3] = [
        ParamGroup::TypeTables,
        ParamGroup::GlobalEncoder,
        ParamGroup::LocalEncoder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::TypeTables => "type_tables",
            ParamGroup::GlobalEncoder => "global_encoder",
            ParamGroup::LocalEncoder => "local_encoder",
            ParamGroup::Gate => "gate",
            ParamGroup::TeamEmbeddings => "team_embeddings",
            ParamGroup::TeamEncoder => "team_encoder",
            ParamGroup::MatchNet => "match_net",
            ParamGroup::PretrainHeads => "pretrain_heads",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub group: ParamGroup,
    pub value: Mat,
}

#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, group: ParamGroup, value: Mat) -> ParamId {
        let name = name.into();
        assert!(
            self.id_of(&name).is_none(),
            "duplicate parameter name {name}"
        );
        self.params.push(Param { name, group, value });
        ParamId(self.params.len() as u32 - 1)
    }

    pub fn get(&self, id: ParamId) -> &Mat {
        &self.params[id.index()].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.params[id.index()].value
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.index()]
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.params
            .iter()
            .position(|p| p.name == name)
            .map(|i| ParamId(i as u32))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params
            .iter()
            .enumerate()
            .map(|(i, p)| (ParamId(i as u32), p))
    }

    pub fn ids_in(&self, groups: &[ParamGroup]) -> Vec<ParamId> {
        self.iter()
            .filter(|(_, p)| groups.contains(&p.group))
            .map(|(id, _)| id)
            .collect()
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// SHA-256 over names, shapes and the little-endian bytes of every value
    /// in `group`, in registration order.
    pub fn group_hash(&self, group: ParamGroup) -> String {
        let mut h = Sha256::new();
        for p in self.params.iter().filter(|p| p.group == group) {
            h.update(p.name.as_bytes());
            h.update((p.value.nrows() as u64).to_le_bytes());
            h.update((p.value.ncols() as u64).to_le_bytes());
            for x in p.value.iter() {
                h.update(x.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Overwrites values from `other` wherever names and shapes agree. Returns
    /// the number of parameters copied.
    pub fn load_from(&mut self, other: &ParamStore, groups: &[ParamGroup]) -> usize {
        let mut copied = 0;
        for p in self.params.iter_mut().filter(|p| groups.contains(&p.group)) {
            if let Some(src) = other.params.iter().find(|q| q.name == p.name) {
                if src.value.dim() == p.value.dim() {
                    p.value.assign(&src.value);
                    copied += 1;
                }
            }
        }
        copied
    }
}

/// Uniform fan-in initialization `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
pub fn fan_in_uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    let bound = 1.0 / (rows as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
}

pub fn small_normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Mat {
    let normal = Normal::new(0.0, std).expect("valid std");
    Array2::from_shape_fn((rows, cols), |_| normal.sample(rng))
}

/// Builder handed to layer constructors so names are prefixed consistently.
pub struct Init<'a> {
    pub store: &'a mut ParamStore,
    pub rng: &'a mut ChaCha8Rng,
    pub group: ParamGroup,
    prefix: String,
}

impl<'a> Init<'a> {
    pub fn new(store: &'a mut ParamStore, rng: &'a mut ChaCha8Rng, group: ParamGroup) -> Self {
        Init {
            store,
            rng,
            group,
            prefix: group.name().to_string(),
        }
    }

    pub fn scoped<R>(&mut self, name: &str, f: impl FnOnce(&mut Init<'_>) -> R) -> R {
        let prefix = format!("{}.{}", self.prefix, name);
        let mut child = Init {
            store: self.store,
            rng: self.rng,
            group: self.group,
            prefix,
        };
        f(&mut child)
    }

    pub fn add(&mut self, name: &str, value: Mat) -> ParamId {
        let full = format!("{}.{}", self.prefix, name);
        self.store.add(full, self.group, value)
    }

    pub fn uniform(&mut self, name: &str, rows: usize, cols: usize) -> ParamId {
        let v = fan_in_uniform(self.rng, rows, cols);
        self.add(name, v)
    }

    pub fn normal(&mut self, name: &str, rows: usize, cols: usize, std: f64) -> ParamId {
        let v = small_normal(self.rng, rows, cols, std);
        self.add(name, v)
    }

    pub fn zeros(&mut self, name: &str, rows: usize, cols: usize) -> ParamId {
        self.add(name, Array2::zeros((rows, cols)))
    }

    pub fn ones(&mut self, name: &str, rows: usize, cols: usize) -> ParamId {
        self.add(name, Array2::ones((rows, cols)))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(init: &mut Init<'_>, name: &str, in_dim: usize, out_dim: usize, bias: bool) -> Self {
        init.scoped(name, |init| Linear {
            weight: init.uniform("weight", in_dim, out_dim),
            bias: bias.then(|| init.zeros("bias", 1, out_dim)),
            in_dim,
            out_dim,
        })
    }

    pub fn forward(&self, t: &mut Tape, ps: &ParamStore, x: Var) -> Var {
        let w = t.param(self.weight, ps.get(self.weight));
        let y = t.matmul(x, w);
        match self.bias {
            Some(b) => {
                let b = t.param(b, ps.get(b));
                t.add_row(y, b)
            }
            None => y,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub const EPS: f64 = 1e-5;

    pub fn new(init: &mut Init<'_>, name: &str, dim: usize) -> Self {
        init.scoped(name, |init| LayerNorm {
            gain: init.ones("gain", 1, dim),
            bias: init.zeros("bias", 1, dim),
        })
    }

    pub fn forward(&self, t: &mut Tape, ps: &ParamStore, x: Var) -> Var {
        let n = t.layer_norm(x, Self::EPS);
        let g = t.param(self.gain, ps.get(self.gain));
        let b = t.param(self.bias, ps.get(self.bias));
        let y = t.mul_row(n, g);
        t.add_row(y, b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Gelu,
    Elu,
}

impl Activation {
    pub fn apply(self, t: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Gelu => t.gelu(x),
            Activation::Elu => t.elu(x),
        }
    }
}

/// Two or more linear layers with an activation between consecutive ones.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

impl Mlp {
    pub fn new(init: &mut Init<'_>, name: &str, dims: &[usize], activation: Activation) -> Self {
        assert!(dims.len() >= 2);
        init.scoped(name, |init| Mlp {
            layers: dims
                .windows(2)
                .enumerate()
                .map(|(i, w)| Linear::new(init, &i.to_string(), w[0], w[1], true))
                .collect(),
            activation,
        })
    }

    pub fn forward(&self, t: &mut Tape, ps: &ParamStore, x: Var) -> Var {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(t, ps, h);
            if i + 1 < self.layers.len() {
                h = self.activation.apply(t, h);
            }
        }
        h
    }
}

/// Pre-norm multi-head self-attention block with a feed-forward sublayer.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransformerLayer {
    pub heads: usize,
    pub width: usize,
    norm_attn: LayerNorm,
    query: Linear,
    key: Linear,
    value: Linear,
    out: Linear,
    norm_ff: LayerNorm,
    ff_in: Linear,
    ff_out: Linear,
}

/// Output of one transformer layer. `attention` holds one `n x n` row-stochastic
/// matrix per head.
pub struct LayerOutput {
    pub hidden: Var,
    pub attention: Vec<Var>,
}

impl TransformerLayer {
    pub fn new(init: &mut Init<'_>, name: &str, width: usize, heads: usize, ff_mult: usize) -> Self {
        assert!(heads > 0 && width % heads == 0, "width {width} not divisible by {heads} heads");
        init.scoped(name, |init| TransformerLayer {
            heads,
            width,
            norm_attn: LayerNorm::new(init, "norm_attn", width),
            query: Linear::new(init, "query", width, width, true),
            key: Linear::new(init, "key", width, width, true),
            value: Linear::new(init, "value", width, width, true),
            out: Linear::new(init, "out", width, width, true),
            norm_ff: LayerNorm::new(init, "norm_ff", width),
            ff_in: Linear::new(init, "ff_in", width, width * ff_mult, true),
            ff_out: Linear::new(init, "ff_out", width * ff_mult, width, true),
        })
    }

    pub fn forward(&self, t: &mut Tape, ps: &ParamStore, x: Var) -> LayerOutput {
        let h = self.norm_attn.forward(t, ps, x);
        let q = self.query.forward(t, ps, h);
        let k = self.key.forward(t, ps, h);
        let v = self.value.forward(t, ps, h);
        let head_dim = self.width / self.heads;
        let scale = 1.0 / (head_dim as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        let mut attention = Vec::with_capacity(self.heads);
        for head in 0..self.heads {
            let start = head * head_dim;
            let qh = t.slice_cols(q, start, head_dim);
            let kh = t.slice_cols(k, start, head_dim);
            let vh = t.slice_cols(v, start, head_dim);
            let kt = t.transpose(kh);
            let scores = t.matmul(qh, kt);
            let scores = t.scale(scores, scale);
            let probs = t.softmax_rows(scores);
            attention.push(probs);
            outs.push(t.matmul(probs, vh));
        }
        let merged = if outs.len() == 1 { outs[0] } else { t.concat_cols(&outs) };
        let attn_out = self.out.forward(t, ps, merged);
        let x = t.add(x, attn_out);

        let h = self.norm_ff.forward(t, ps, x);
        let h = self.ff_in.forward(t, ps, h);
        let h = t.gelu(h);
        let h = self.ff_out.forward(t, ps, h);
        LayerOutput {
            hidden: t.add(x, h),
            attention,
        }
    }
}
