//! Per-match player encoders: a token graph transformer over nodes and edges,
//! a heterogeneous GAT over typed edges, and the gate that mixes them.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::autograd::{Mat, Tape, Var};
use crate::data::EventKind;
use crate::error::{Error, Result};
use crate::graph::{CachedGraph, EdgeType, NodeIdentifierSet, NodeType, PlayerGraph};
use crate::nn::{Activation, Init, LayerNorm, Linear, Mlp, ParamGroup, ParamId, ParamStore, TransformerLayer};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlayerNetConfig {
    pub hidden: usize,
    pub output: usize,
    pub d_id: usize,
    pub global_layers: usize,
    pub heads: usize,
    pub ff_mult: usize,
    pub local_layers: usize,
    pub gate_hidden: usize,
    pub leaky_slope: f64,
}

impl Default for PlayerNetConfig {
    fn default() -> Self {
        PlayerNetConfig {
            hidden: 64,
            output: 16,
            d_id: 8,
            global_layers: 3,
            heads: 4,
            ff_mult: 2,
            local_layers: 3,
            gate_hidden: 16,
            leaky_slope: 0.2,
        }
    }
}

impl PlayerNetConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden", self.hidden),
            ("output", self.output),
            ("d_id", self.d_id),
            ("global_layers", self.global_layers),
            ("heads", self.heads),
            ("ff_mult", self.ff_mult),
            ("local_layers", self.local_layers),
            ("gate_hidden", self.gate_hidden),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("player_net.{name} must be positive")));
            }
        }
        if self.hidden % self.heads != 0 {
            return Err(Error::config("player_net.hidden must be divisible by heads"));
        }
        Ok(())
    }
}

/// Learnable node-type and edge-type vectors of identifier width.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TypeTables {
    pub node_types: ParamId,
    pub edge_types: ParamId,
    pub d_id: usize,
}

impl TypeTables {
    pub fn new(init: &mut Init<'_>, d_id: usize) -> Self {
        TypeTables {
            node_types: init.normal("node_types", NodeType::COUNT, d_id, 0.02),
            edge_types: init.normal("edge_types", EdgeType::COUNT, d_id, 0.02),
            d_id,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    Node,
    Edge,
}

/// Augmented tokens, nodes first. `tokens` is `(|V|+|E|) x (hidden + d_id)`;
/// `identifiers` is its identifier part alone.
pub struct TokenSequence {
    pub tokens: Var,
    pub identifiers: Var,
    pub kinds: Vec<TokenKind>,
    pub nodes: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlobalMode {
    /// Node-token outputs, one row per player.
    Embeddings,
    /// The class-token output as a single row.
    ClassToken,
}

pub struct GlobalOutput {
    pub output: Var,
    /// Attention per layer, per head, over the full token sequence (class
    /// token first when present).
    pub attention: Vec<Vec<Var>>,
    /// 1 when a class token was prepended.
    pub offset: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GlobalEncoder {
    pub node_proj: Linear,
    pub edge_proj: Linear,
    pub class_token: ParamId,
    pub input: Linear,
    pub layers: Vec<TransformerLayer>,
    pub final_norm: LayerNorm,
    pub out: Linear,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GatLayer {
    /// Message weights for pass, defense and self-loop entries.
    pub weights: [ParamId; 3],
    pub attn_proj: ParamId,
    pub attn_dst: ParamId,
    pub attn_src: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

pub const SELF_LOOP: usize = 2;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalEncoder {
    pub layers: Vec<GatLayer>,
    pub leaky_slope: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Gate {
    pub mlp: Mlp,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlayerNet {
    pub config: PlayerNetConfig,
    pub tables: TypeTables,
    pub global: GlobalEncoder,
    pub local: LocalEncoder,
    pub gate: Gate,
}

fn scoped<'a, R>(store: &'a mut ParamStore, rng: &'a mut rand_chacha::ChaCha8Rng, group: ParamGroup, f: impl FnOnce(&mut Init<'_>) -> R) -> R {
    f(&mut Init::new(store, rng, group))
}

impl PlayerNet {
    pub fn new(store: &mut ParamStore, rng: &mut rand_chacha::ChaCha8Rng, config: PlayerNetConfig) -> Self {
        let c = config;
        let tables = scoped(store, rng, ParamGroup::TypeTables, |init| TypeTables::new(init, c.d_id));
        let global = scoped(store, rng, ParamGroup::GlobalEncoder, |init| GlobalEncoder {
            node_proj: Linear::new(init, "node_proj", EventKind::COUNT, c.hidden, true),
            edge_proj: Linear::new(init, "edge_proj", 1, c.hidden, true),
            class_token: init.normal("class_token", 1, c.hidden + c.d_id, 0.02),
            input: Linear::new(init, "input", c.hidden + c.d_id, c.hidden, true),
            layers: (0..c.global_layers)
                .map(|l| TransformerLayer::new(init, &format!("layer{l}"), c.hidden, c.heads, c.ff_mult))
                .collect(),
            final_norm: LayerNorm::new(init, "final_norm", c.hidden),
            out: Linear::new(init, "out", c.hidden, c.output, true),
        });
        let local = scoped(store, rng, ParamGroup::LocalEncoder, |init| {
            let mut dims = vec![EventKind::COUNT];
            dims.extend(std::iter::repeat_n(c.hidden, c.local_layers - 1));
            dims.push(c.output);
            LocalEncoder {
                layers: dims
                    .windows(2)
                    .enumerate()
                    .map(|(l, w)| {
                        init.scoped(&format!("layer{l}"), |init| GatLayer {
                            weights: [
                                init.uniform("w_pass", w[0], w[1]),
                                init.uniform("w_defense", w[0], w[1]),
                                init.uniform("w_self", w[0], w[1]),
                            ],
                            attn_proj: init.uniform("attn_proj", w[0], w[1]),
                            attn_dst: init.uniform("attn_dst", w[1], 1),
                            attn_src: init.uniform("attn_src", w[1], 1),
                            in_dim: w[0],
                            out_dim: w[1],
                        })
                    })
                    .collect(),
                leaky_slope: c.leaky_slope,
            }
        });
        let gate = scoped(store, rng, ParamGroup::Gate, |init| Gate {
            mlp: Mlp::new(init, "mlp", &[EventKind::COUNT, c.gate_hidden, 2], Activation::Gelu),
        });
        PlayerNet {
            config,
            tables,
            global,
            local,
            gate,
        }
    }

    /// Builds the token sequence of `graph`.
    pub fn augment_tokens(&self, t: &mut Tape, ps: &ParamStore, graph: &PlayerGraph, ids: &NodeIdentifierSet) -> Result<TokenSequence> {
        augment_tokens(t, ps, graph, ids, &self.tables, &self.global)
    }

    pub fn encode_global(&self, t: &mut Tape, ps: &ParamStore, tokens: &TokenSequence, mode: GlobalMode, prepend_class: bool) -> Result<GlobalOutput> {
        self.global.forward(t, ps, tokens, mode, prepend_class)
    }

    pub fn encode_local(&self, t: &mut Tape, ps: &ParamStore, graph: &PlayerGraph) -> Result<Var> {
        self.local.forward(t, ps, graph)
    }

    pub fn gate(&self, t: &mut Tape, ps: &ParamStore, node_features: Var) -> Var {
        self.gate.forward(t, ps, node_features)
    }

    /// Global (class token prepended) and local embeddings of one graph.
    pub fn expert_embeddings(&self, t: &mut Tape, ps: &ParamStore, cg: &CachedGraph) -> Result<(Var, Var)> {
        let tokens = self.augment_tokens(t, ps, &cg.graph, &cg.ids)?;
        let glo = self.encode_global(t, ps, &tokens, GlobalMode::Embeddings, true)?;
        let loc = self.encode_local(t, ps, &cg.graph)?;
        Ok((glo.output, loc))
    }

    /// Fused per-player embeddings of one graph.
    pub fn forward(&self, t: &mut Tape, ps: &ParamStore, cg: &CachedGraph) -> Result<Var> {
        let (glo, loc) = self.expert_embeddings(t, ps, cg)?;
        let x = t.constant(cg.graph.node_features());
        let w = self.gate(t, ps, x);
        fuse(t, glo, loc, w)
    }
}

/// Token construction with explicit tables and projections.
pub fn augment_tokens(
    t: &mut Tape,
    ps: &ParamStore,
    graph: &PlayerGraph,
    ids: &NodeIdentifierSet,
    tables: &TypeTables,
    global: &GlobalEncoder,
) -> Result<TokenSequence> {
    let n = graph.node_count();
    if ids.identifiers.ncols() != tables.d_id {
        return Err(Error::config(format!(
            "identifier width {} does not match type table width {}",
            ids.identifiers.ncols(),
            tables.d_id
        )));
    }
    if ids.identifiers.nrows() != n {
        return Err(Error::LengthMismatch {
            left: ids.identifiers.nrows(),
            right: n,
        });
    }
    if n == 0 {
        return Err(Error::data(format!("match {}: empty graph", graph.match_id)));
    }
    let pid = t.constant(ids.identifiers.clone());
    let pa = t.param(tables.node_types, ps.get(tables.node_types));
    let pk = t.param(tables.edge_types, ps.get(tables.edge_types));

    let node_types: Vec<usize> = graph.nodes.iter().map(|v| v.node_type.index()).collect();
    let twice = t.scale(pid, 2.0);
    let pa_rows = t.gather_rows(pa, &node_types);
    let node_id = t.add(twice, pa_rows);
    let xv = t.constant(graph.node_features());
    let node_feat = global.node_proj.forward(t, ps, xv);
    let node_tokens = t.concat_cols(&[node_feat, node_id]);

    let mut kinds = vec![TokenKind::Node; n];
    if graph.edges.is_empty() {
        return Ok(TokenSequence {
            tokens: node_tokens,
            identifiers: node_id,
            kinds,
            nodes: n,
        });
    }
    let src: Vec<usize> = graph.edges.iter().map(|e| e.src).collect();
    let dst: Vec<usize> = graph.edges.iter().map(|e| e.dst).collect();
    let ety: Vec<usize> = graph.edges.iter().map(|e| e.edge_type.index()).collect();
    let pu = t.gather_rows(pid, &src);
    let pv = t.gather_rows(pid, &dst);
    let pk_rows = t.gather_rows(pk, &ety);
    let diff = t.sub(pu, pv);
    let edge_id = t.add(diff, pk_rows);
    let xe = t.constant(graph.edge_features());
    let edge_feat = global.edge_proj.forward(t, ps, xe);
    let edge_tokens = t.concat_cols(&[edge_feat, edge_id]);
    kinds.extend(std::iter::repeat_n(TokenKind::Edge, graph.edge_count()));
    Ok(TokenSequence {
        tokens: t.concat_rows(&[node_tokens, edge_tokens]),
        identifiers: t.concat_rows(&[node_id, edge_id]),
        kinds,
        nodes: n,
    })
}

fn check_finite(t: &Tape, v: Var, what: &str) -> Result<()> {
    if let Some(bad) = t.value(v).iter().find(|x| !x.is_finite()) {
        return Err(Error::Numeric(format!("{what} produced non-finite activation {bad}")));
    }
    Ok(())
}

impl GlobalEncoder {
    pub fn forward(&self, t: &mut Tape, ps: &ParamStore, tokens: &TokenSequence, mode: GlobalMode, prepend_class: bool) -> Result<GlobalOutput> {
        if mode == GlobalMode::ClassToken && !prepend_class {
            return Err(Error::config("class-token readout requires a prepended class token"));
        }
        let mut x = tokens.tokens;
        let offset = usize::from(prepend_class);
        if prepend_class {
            let cls = t.param(self.class_token, ps.get(self.class_token));
            x = t.concat_rows(&[cls, x]);
        }
        let mut h = self.input.forward(t, ps, x);
        let mut attention = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let out = layer.forward(t, ps, h);
            h = out.hidden;
            check_finite(t, h, &format!("global encoder layer {l}"))?;
            attention.push(out.attention);
        }
        let h = self.final_norm.forward(t, ps, h);
        let output = match mode {
            GlobalMode::Embeddings => t.slice_rows(h, offset, tokens.nodes),
            GlobalMode::ClassToken => t.slice_rows(h, 0, 1),
        };
        let output = self.out.forward(t, ps, output);
        check_finite(t, output, "global encoder output")?;
        Ok(GlobalOutput {
            output,
            attention,
            offset,
        })
    }
}

/// Attention entries of one GAT layer: every typed edge plus one self-loop per
/// node, as `(dst, src, weight slot, logit multiplier)`.
pub fn gat_entries(graph: &PlayerGraph) -> Vec<(usize, usize, usize, f64)> {
    let mut out: Vec<(usize, usize, usize, f64)> = graph
        .edges
        .iter()
        .map(|e| (e.dst, e.src, e.edge_type.index(), (e.count as f64).ln_1p()))
        .collect();
    out.extend((0..graph.node_count()).map(|v| (v, v, SELF_LOOP, 1.0)));
    out
}

pub struct GatOutput {
    pub hidden: Var,
    /// One weight per entry of [`gat_entries`], normalized per destination.
    pub attention: Var,
}

impl GatLayer {
    pub fn forward(&self, t: &mut Tape, ps: &ParamStore, x: Var, entries: &[(usize, usize, usize, f64)], slope: f64) -> GatOutput {
        let n = t.shape(x).0;
        let wa = t.param(self.attn_proj, ps.get(self.attn_proj));
        let ha = t.matmul(x, wa);
        let ad = t.param(self.attn_dst, ps.get(self.attn_dst));
        let as_ = t.param(self.attn_src, ps.get(self.attn_src));
        let sd = t.matmul(ha, ad);
        let ss = t.matmul(ha, as_);
        let dst: Vec<usize> = entries.iter().map(|e| e.0).collect();
        let src: Vec<usize> = entries.iter().map(|e| e.1).collect();
        let ed = t.gather_rows(sd, &dst);
        let es = t.gather_rows(ss, &src);
        let e = t.add(ed, es);
        let e = t.leaky_relu(e, slope);
        let mult = t.constant(Array2::from_shape_fn((entries.len(), 1), |(i, _)| entries[i].3));
        let e = t.mul(e, mult);
        let alpha = t.segment_softmax(e, &dst, n);

        let mut used = [false; 3];
        for en in entries {
            used[en.2] = true;
        }
        let mut blocks = Vec::new();
        let mut base = [0usize; 3];
        for k in 0..3 {
            base[k] = blocks.len() * n;
            if used[k] {
                let w = t.param(self.weights[k], ps.get(self.weights[k]));
                blocks.push(t.matmul(x, w));
            }
        }
        let messages = if blocks.len() == 1 { blocks[0] } else { t.concat_rows(&blocks) };
        let idx: Vec<usize> = entries.iter().map(|en| base[en.2] + en.1).collect();
        let m = t.gather_rows(messages, &idx);
        let m = t.mul_col(m, alpha);
        let agg = t.scatter_add_rows(m, &dst, n);
        GatOutput {
            hidden: t.elu(agg),
            attention: alpha,
        }
    }
}

impl LocalEncoder {
    pub fn forward(&self, t: &mut Tape, ps: &ParamStore, graph: &PlayerGraph) -> Result<Var> {
        Ok(self.forward_with_attention(t, ps, graph)?.0)
    }

    pub fn forward_with_attention(&self, t: &mut Tape, ps: &ParamStore, graph: &PlayerGraph) -> Result<(Var, Vec<Var>)> {
        if graph.node_count() == 0 {
            return Err(Error::data(format!("match {}: empty graph", graph.match_id)));
        }
        let entries = gat_entries(graph);
        let mut h = t.constant(graph.node_features());
        let mut attention = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let out = layer.forward(t, ps, h, &entries, self.leaky_slope);
            h = out.hidden;
            check_finite(t, h, &format!("local encoder layer {l}"))?;
            attention.push(out.attention);
        }
        Ok((h, attention))
    }
}

impl Gate {
    /// `|V| x 2` rows of `(p_glo, p_loc)`.
    pub fn forward(&self, t: &mut Tape, ps: &ParamStore, node_features: Var) -> Var {
        let logits = self.mlp.forward(t, ps, node_features);
        t.softmax_rows(logits)
    }
}

/// `p_glo * Z_glo + p_loc * Z_loc`, row-wise.
pub fn fuse(t: &mut Tape, global: Var, local: Var, weights: Var) -> Result<Var> {
    let (gs, ls, ws) = (t.shape(global), t.shape(local), t.shape(weights));
    if gs != ls || ws != (gs.0, 2) {
        return Err(Error::config(format!(
            "fuse shapes disagree: global {gs:?}, local {ls:?}, weights {ws:?}"
        )));
    }
    let pg = t.slice_cols(weights, 0, 1);
    let pl = t.slice_cols(weights, 1, 1);
    let a = t.mul_col(global, pg);
    let b = t.mul_col(local, pl);
    Ok(t.add(a, b))
}

/// Plain-matrix form of [`fuse`].
pub fn fuse_values(global: &Mat, local: &Mat, weights: &Mat) -> Result<Mat> {
    let mut t = Tape::new();
    let g = t.constant(global.clone());
    let l = t.constant(local.clone());
    let w = t.constant(weights.clone());
    let out = fuse(&mut t, g, l, w)?;
    Ok(t.value(out).clone())
}
