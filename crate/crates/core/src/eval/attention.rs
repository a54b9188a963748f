use std::fmt::Write as _;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::autograd::Tape;
use crate::data::{Role, Side};
use crate::error::Result;
use crate::graph::CachedGraph;
use crate::model::Model;
use crate::nn::ParamStore;
use crate::player_net::GlobalMode;

pub const GROUPS: usize = 8;

/// Group of a player: home roles first, then away roles.
pub fn role_group(side: Side, role: Role) -> usize {
    side.index() * 4 + role.index()
}

pub fn group_label(g: usize) -> String {
    let side = if g < 4 { "HM" } else { "AW" };
    format!("{side}-{}", Role::ALL[g % 4])
}

/// Mean player-to-player attention between (side, role) groups, rows
/// normalized to sum to 1. Row `i`, column `j` is how much group `i` attends
/// to group `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoleAttentionMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
    /// Player pairs that contributed to each cell.
    pub pairs: Vec<Vec<usize>>,
}

impl RoleAttentionMatrix {
    pub fn column_means(&self) -> Vec<f64> {
        (0..GROUPS)
            .map(|j| self.values.iter().map(|r| r[j]).sum::<f64>() / GROUPS as f64)
            .collect()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<6}", "");
        for l in &self.labels {
            let _ = write!(out, " {l:>6}");
        }
        out.push('\n');
        for (l, row) in self.labels.iter().zip(&self.values) {
            let _ = write!(out, "{l:<6}");
            for v in row {
                let _ = write!(out, " {v:>6.3}");
            }
            out.push('\n');
        }
        out
    }
}

/// Final-layer player-to-player attention of one graph, averaged over heads,
/// with edge and class tokens dropped (not renormalized).
pub fn player_attention(model: &Model, ps: &ParamStore, cg: &CachedGraph) -> Result<Array2<f64>> {
    let mut t = Tape::new();
    let tokens = model.player.augment_tokens(&mut t, ps, &cg.graph, &cg.ids)?;
    let out = model.player.encode_global(&mut t, ps, &tokens, GlobalMode::Embeddings, true)?;
    let n = cg.graph.node_count();
    let last = out.attention.last().expect("at least one layer");
    let mut avg = Array2::zeros((n, n));
    for head in last {
        let a = t.value(*head);
        for i in 0..n {
            for j in 0..n {
                avg[[i, j]] += a[[out.offset + i, out.offset + j]];
            }
        }
    }
    avg /= last.len() as f64;
    Ok(avg)
}

/// Aggregates a per-graph attention matrix into group sums.
pub fn accumulate_groups(sums: &mut Array2<f64>, pairs: &mut Array2<usize>, groups: &[usize], attn: &Array2<f64>) {
    for (i, &gi) in groups.iter().enumerate() {
        for (j, &gj) in groups.iter().enumerate() {
            sums[[gi, gj]] += attn[[i, j]];
            pairs[[gi, gj]] += 1;
        }
    }
}

/// Averages raw weights per group pair, then normalizes rows. Rows with no
/// observations become uniform.
pub fn finish_groups(sums: &Array2<f64>, pairs: &Array2<usize>) -> RoleAttentionMatrix {
    let mut values = vec![vec![0.0; GROUPS]; GROUPS];
    for i in 0..GROUPS {
        for j in 0..GROUPS {
            if pairs[[i, j]] > 0 {
                values[i][j] = sums[[i, j]] / pairs[[i, j]] as f64;
            }
        }
        let s: f64 = values[i].iter().sum();
        if s > 0.0 {
            values[i].iter_mut().for_each(|v| *v /= s);
        } else {
            values[i] = vec![1.0 / GROUPS as f64; GROUPS];
        }
    }
    RoleAttentionMatrix {
        labels: (0..GROUPS).map(group_label).collect(),
        values,
        pairs: (0..GROUPS).map(|i| (0..GROUPS).map(|j| pairs[[i, j]]).collect()).collect(),
    }
}

pub fn attention_role_matrix<'a>(model: &Model, ps: &ParamStore, graphs: impl IntoIterator<Item = &'a CachedGraph>) -> Result<RoleAttentionMatrix> {
    let mut sums = Array2::zeros((GROUPS, GROUPS));
    let mut pairs = Array2::zeros((GROUPS, GROUPS));
    for cg in graphs {
        let attn = player_attention(model, ps, cg)?;
        let groups: Vec<usize> = cg
            .graph
            .nodes
            .iter()
            .map(|v| role_group(v.node_type.side(), v.role))
            .collect();
        accumulate_groups(&mut sums, &mut pairs, &groups, &attn);
    }
    Ok(finish_groups(&sums, &pairs))
}
