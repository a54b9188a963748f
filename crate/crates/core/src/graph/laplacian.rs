use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::PlayerGraph;
use crate::autograd::Mat;

/// Per-node Laplacian coordinates. Columns past `used` are zero padding and
/// carry eigenvalue 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeIdentifierSet {
    pub identifiers: Mat,
    pub eigenvalues: Vec<f64>,
    pub used: usize,
}

const TIE_EPS: f64 = 1e-9;

/// Undirected 0/1 adjacency with types and directions collapsed.
pub fn collapsed_adjacency(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Array2<f64> {
    let mut a = Array2::zeros((n, n));
    for (u, v) in edges {
        if u != v {
            a[[u, v]] = 1.0;
            a[[v, u]] = 1.0;
        }
    }
    a
}

fn components(adj: &Array2<f64>) -> Vec<Vec<usize>> {
    let n = adj.nrows();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut comp = vec![s];
        let mut i = 0;
        while i < comp.len() {
            let u = comp[i];
            for v in 0..n {
                if adj[[u, v]] != 0.0 && !seen[v] {
                    seen[v] = true;
                    comp.push(v);
                }
            }
            i += 1;
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Flips `v` so its entry of largest magnitude is positive; the first such
/// entry wins ties.
pub fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() + TIE_EPS {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Identifiers from an adjacency matrix; see [`laplacian_node_identifiers`].
pub fn identifiers_from_adjacency(adj: &Array2<f64>, d_id: usize) -> NodeIdentifierSet {
    let n = adj.nrows();
    let mut pairs: Vec<(f64, Vec<f64>)> = Vec::new();
    for comp in components(adj) {
        let m = comp.len();
        if m < 2 {
            continue;
        }
        let deg: Vec<f64> = comp.iter().map(|&u| comp.iter().map(|&v| adj[[u, v]]).sum()).collect();
        let lap = DMatrix::from_fn(m, m, |i, j| {
            let off = adj[[comp[i], comp[j]]] / (deg[i] * deg[j]).sqrt();
            if i == j {
                1.0 - off
            } else {
                -off
            }
        });
        let eig = SymmetricEigen::new(lap);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        for &k in &order[1..] {
            let mut full = vec![0.0; n];
            for (i, &u) in comp.iter().enumerate() {
                full[u] = eig.eigenvectors[(i, k)];
            }
            fix_sign(&mut full);
            pairs.push((eig.eigenvalues[k].max(0.0), full));
        }
    }
    pairs.sort_by(|a, b| {
        if (a.0 - b.0).abs() > TIE_EPS {
            a.0.total_cmp(&b.0)
        } else {
            a.1.iter()
                .zip(&b.1)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        }
    });
    let used = pairs.len().min(d_id);
    let mut identifiers = Array2::zeros((n, d_id));
    let mut eigenvalues = vec![0.0; d_id];
    for (j, (lambda, v)) in pairs.into_iter().take(d_id).enumerate() {
        eigenvalues[j] = lambda;
        for i in 0..n {
            identifiers[[i, j]] = v[i];
        }
    }
    NodeIdentifierSet {
        identifiers,
        eigenvalues,
        used,
    }
}

/// Eigenvectors of the symmetric normalized Laplacian of the type-collapsed
/// undirected graph, smallest eigenvalues first, skipping the smallest pair of
/// each connected component. Isolated nodes get zero rows.
pub fn laplacian_node_identifiers(graph: &PlayerGraph, d_id: usize) -> NodeIdentifierSet {
    let adj = collapsed_adjacency(graph.node_count(), graph.edges.iter().map(|e| (e.src, e.dst)));
    identifiers_from_adjacency(&adj, d_id)
}
