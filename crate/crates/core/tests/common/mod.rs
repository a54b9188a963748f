#![allow(dead_code)]

use std::collections::BTreeMap;

use higformer::autograd::Gradients;
use higformer::data::synth::{synthesize_league, SynthConfig, SyntheticLeague};
use higformer::data::{EventCounts, MatchId, PlayerId, Role};
use higformer::graph::{CachedGraph, EdgeType, NodeType, PlayerEdge, PlayerGraph, PlayerNode};
use higformer::nn::{ParamId, ParamStore};
use higformer::training::TrainConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn counts(values: [u32; 10]) -> EventCounts {
    EventCounts(values)
}

/// Two home and two away players with passes inside each side and duels
/// across.
pub fn four_node_graph() -> PlayerGraph {
    let node = |player: i64, node_type, role, c: [u32; 10]| PlayerNode {
        player: PlayerId(player),
        node_type,
        role,
        counts: counts(c),
    };
    let edge = |src, dst, edge_type, count| PlayerEdge {
        src,
        dst,
        edge_type,
        count,
    };
    PlayerGraph {
        match_id: MatchId(1),
        nodes: vec![
            node(10, NodeType::Red, Role::DF, [3, 1, 0, 0, 2, 0, 1, 12, 0, 0]),
            node(11, NodeType::Red, Role::FW, [1, 0, 1, 0, 0, 2, 3, 6, 0, 2]),
            node(20, NodeType::Blue, Role::GK, [0, 0, 0, 1, 0, 0, 0, 4, 3, 0]),
            node(21, NodeType::Blue, Role::MF, [4, 2, 0, 0, 1, 0, 2, 9, 0, 1]),
        ],
        edges: vec![
            edge(0, 1, EdgeType::Pass, 5),
            edge(0, 3, EdgeType::Defense, 2),
            edge(1, 0, EdgeType::Pass, 2),
            edge(2, 3, EdgeType::Pass, 3),
            edge(3, 1, EdgeType::Defense, 1),
            edge(3, 2, EdgeType::Pass, 4),
        ],
    }
}

pub fn four_node_cached(d_id: usize) -> CachedGraph {
    CachedGraph::new(four_node_graph(), d_id)
}

pub fn small_league(seed: u64, teams: usize, rounds: usize) -> SyntheticLeague {
    synthesize_league(&SynthConfig {
        n_teams: teams,
        n_rounds: rounds,
        seed,
        ..SynthConfig::default()
    })
    .expect("valid synthetic config")
}

/// Default architecture with few optimizer steps.
pub fn quick_config(stage1: usize, stage2: usize) -> TrainConfig {
    TrainConfig {
        stage1_steps: stage1,
        stage2_steps: stage2,
        batch_size: 8,
        ..TrainConfig::default()
    }
}

/// Largest relative error between analytic gradients and central
/// differences. Every parameter in `ids` is probed at up to `per_param`
/// entries. The denominator is floored at `1e-6` so entries whose true
/// gradient is zero compare absolutely.
pub fn gradient_check(
    ps: &ParamStore,
    ids: &[ParamId],
    per_param: usize,
    seed: u64,
    f: impl Fn(&ParamStore) -> (f64, Gradients),
) -> (f64, usize, String) {
    let (_, grads) = f(ps);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut worst_at = String::new();
    let mut probes = 0;
    let mut work = ps.clone();
    for &id in ids {
        let (rows, cols) = ps.get(id).dim();
        let total = rows * cols;
        let picks: Vec<usize> = if total <= per_param {
            (0..total).collect()
        } else {
            (0..per_param).map(|_| rng.random_range(0..total)).collect()
        };
        for k in picks {
            let (r, c) = (k / cols, k % cols);
            let orig = ps.get(id)[[r, c]];
            work.get_mut(id)[[r, c]] = orig + h;
            let up = f(&work).0;
            work.get_mut(id)[[r, c]] = orig - h;
            let down = f(&work).0;
            work.get_mut(id)[[r, c]] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads.get(id).map_or(0.0, |g| g[[r, c]]);
            let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            probes += 1;
            if err > worst {
                worst = err;
                worst_at = format!("{}[{r},{c}] analytic {analytic:e} numeric {numeric:e}", ps.param(id).name);
            }
        }
    }
    (worst, probes, worst_at)
}

/// Fixed pseudo-random matrix.
pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> ndarray::Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ndarray::Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

/// Map from player to position in a graph's node list.
pub fn node_positions(g: &PlayerGraph) -> BTreeMap<PlayerId, usize> {
    g.nodes.iter().enumerate().map(|(i, n)| (n.player, i)).collect()
}
