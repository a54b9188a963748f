mod common;

use std::collections::{BTreeMap, HashMap};

use higformer::autograd::{Mat, Tape};
use higformer::container::Container;
use higformer::data::{MatchId, Outcome, PlayerId, Side, TeamId};
use higformer::eval::attention_role_matrix;
use higformer::graph::{
    build_team_graph, laplacian_node_identifiers, CachedGraph, EdgeType, NodeIdentifierSet, PlayerGraph, TeamEdge, TeamGraph,
};
use higformer::match_net::{classify, outcome_to_target, pool_history, RosterEntry, Thresholds};
use higformer::model::Model;
use higformer::nn::ParamStore;
use higformer::player_net::{GlobalMode, PlayerNet, PlayerNetConfig};
use higformer::team_net::{TeamNet, TeamNetConfig};
use higformer::training::mse_loss;
use ndarray::Array1;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;

fn small_player_net(seed: u64) -> (PlayerNet, ParamStore) {
    let mut ps = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = PlayerNetConfig {
        hidden: 16,
        output: 8,
        d_id: 4,
        heads: 2,
        global_layers: 2,
        local_layers: 2,
        ..PlayerNetConfig::default()
    };
    (PlayerNet::new(&mut ps, &mut rng, cfg), ps)
}

fn permute_rows(m: &Mat, perm: &[usize]) -> Mat {
    let mut out = m.clone();
    for (i, &p) in perm.iter().enumerate() {
        out.row_mut(p).assign(&m.row(i));
    }
    out
}

fn permuted_cached(cg: &CachedGraph, perm: &[usize]) -> CachedGraph {
    CachedGraph {
        graph: cg.graph.permuted(perm),
        ids: NodeIdentifierSet {
            identifiers: permute_rows(&cg.ids.identifiers, perm),
            ..cg.ids.clone()
        },
    }
}

fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn league_graph(seed: u64) -> CachedGraph {
    let league = small_league(seed, 4, 1);
    let cfg = quick_config(0, 0);
    let graphs = higformer::graph::build_all_graphs(&league.dataset, &league.events, cfg.graph, 4).unwrap();
    graphs.into_values().next().unwrap()
}

fn edge_multiset(g: &PlayerGraph) -> Vec<(PlayerId, PlayerId, EdgeType, u32)> {
    let mut v: Vec<_> = g
        .edges
        .iter()
        .map(|e| (g.nodes[e.src].player, g.nodes[e.dst].player, e.edge_type, e.count))
        .collect();
    v.sort();
    v
}

/// Share of meetings between `a` and `b` that `a` won, by direct counting.
fn rate(matches: &[higformer::data::MatchRecord], a: TeamId, b: TeamId) -> Option<f64> {
    let meetings: Vec<_> = matches
        .iter()
        .filter(|m| (m.home_team == a && m.away_team == b) || (m.home_team == b && m.away_team == a))
        .collect();
    let wins = meetings
        .iter()
        .filter(|m| (m.home_team == a && m.label == Outcome::Win) || (m.away_team == a && m.label == Outcome::Lose))
        .count();
    (!meetings.is_empty()).then(|| wins as f64 / meetings.len() as f64)
}

fn perm_strategy(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<usize>>()).prop_shuffle()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn relabeling_preserves_edge_and_feature_multisets(seed in 0u64..50, shuffle in any::<u64>()) {
        let cg = league_graph(seed);
        let n = cg.graph.node_count();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(shuffle);
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let p = cg.graph.permuted(&perm);
        p.validate().unwrap();
        prop_assert_eq!(edge_multiset(&cg.graph), edge_multiset(&p));
        let mut a: Vec<_> = cg.graph.nodes.iter().map(|v| (v.player, v.counts.0)).collect();
        let mut b: Vec<_> = p.nodes.iter().map(|v| (v.player, v.counts.0)).collect();
        a.sort();
        b.sort();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn encoders_are_permutation_equivariant(perm in perm_strategy(4), seed in 0u64..1000) {
        let (net, ps) = small_player_net(seed);
        let cg = four_node_cached(net.config.d_id);
        let pg = permuted_cached(&cg, &perm);
        let mut t = Tape::new();
        let (g0, l0) = net.expert_embeddings(&mut t, &ps, &cg).unwrap();
        let (g1, l1) = net.expert_embeddings(&mut t, &ps, &pg).unwrap();
        prop_assert!(max_abs_diff(&permute_rows(t.value(g0), &perm), t.value(g1)) < 1e-9);
        prop_assert!(max_abs_diff(&permute_rows(t.value(l0), &perm), t.value(l1)) < 1e-9);
    }

    #[test]
    fn identifiers_are_deterministic(seed in 0u64..50) {
        let cg = league_graph(seed);
        prop_assert_eq!(laplacian_node_identifiers(&cg.graph, 8), laplacian_node_identifiers(&cg.graph, 8));
    }

    #[test]
    fn classify_is_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let rank = |o: Outcome| match o { Outcome::Lose => 0, Outcome::Draw => 1, Outcome::Win => 2 };
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(rank(classify(lo).unwrap()) <= rank(classify(hi).unwrap()));
    }

    #[test]
    fn mse_is_non_negative_and_zero_only_when_exact(y in 0.0f64..=1.0, y_hat in 0.0f64..=1.0) {
        let l = mse_loss(y, y_hat);
        prop_assert!(l >= 0.0);
        prop_assert_eq!(l == 0.0, y == y_hat);
    }

    #[test]
    fn pooling_a_single_entry_returns_it(values in proptest::collection::vec(-5.0f64..5.0, 6)) {
        let v = Array1::from(values);
        let embeddings = HashMap::from([((PlayerId(1), MatchId(4)), v.clone())]);
        let roster = [RosterEntry { player: PlayerId(1), side: Side::Home, history: vec![MatchId(4)] }];
        let once = pool_history(&embeddings, &roster, 10, 6);
        prop_assert_eq!(&once[0].vector, &v);
        let again = HashMap::from([((PlayerId(1), MatchId(4)), once[0].vector.clone())]);
        prop_assert_eq!(&pool_history(&again, &roster, 10, 6)[0].vector, &v);
    }

    #[test]
    fn container_round_trips(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>(), kind in "[a-z]{1,12}") {
        let mut c = Container::new(kind.clone(), serde_json::json!({"seed": seed.to_string()}));
        c.push("a", random_matrix(rows, cols, seed));
        c.push("b", random_matrix(cols, rows, seed ^ 1));
        let back = Container::from_bytes(&c.to_bytes().unwrap()).unwrap();
        prop_assert_eq!(back.tensor("a").unwrap(), c.tensor("a").unwrap());
        prop_assert_eq!(back.tensor("b").unwrap(), c.tensor("b").unwrap());
        prop_assert_eq!(back.kind, kind);
    }

    #[test]
    fn team_edges_dominate_reverse_rates(seed in 0u64..200, half in 2usize..5, rounds in 1usize..4) {
        let league = small_league(seed, 2 * half, rounds);
        let ds = &league.dataset;
        let train: Vec<_> = ds.train().cloned().collect();
        let g = build_team_graph(train.iter(), ds.teams());
        let mut pairs = std::collections::BTreeSet::new();
        for e in &g.edges {
            let (a, b) = (g.teams[e.src], g.teams[e.dst]);
            prop_assert!(pairs.insert((a.min(b), a.max(b))), "two edges for one pair");
            let forward = rate(&train, a, b).unwrap();
            let reverse = rate(&train, b, a).unwrap();
            prop_assert_eq!(e.winning_rate, forward);
            prop_assert!(forward > reverse);
            prop_assert!(e.winning_rate > 0.0 && e.winning_rate <= 1.0);
        }
        for (i, &a) in g.teams.iter().enumerate() {
            for (j, &b) in g.teams.iter().enumerate() {
                if let (Some(x), Some(y)) = (rate(&train, a, b), rate(&train, b, a)) {
                    let has = g.edges.iter().any(|e| e.src == i && e.dst == j);
                    prop_assert_eq!(has, x > y);
                }
            }
        }
    }

    #[test]
    fn team_encoder_is_permutation_equivariant(perm in perm_strategy(5), seed in 0u64..1000) {
        let teams: Vec<TeamId> = (1..=5).map(TeamId).collect();
        let mut ps = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = TeamNetConfig { embedding: 8, hidden: 8, output: 4, layers: 2, ..TeamNetConfig::default() };
        let net = TeamNet::new(&mut ps, &mut rng, cfg, teams.clone());
        let edges = vec![
            TeamEdge { src: 0, dst: 1, winning_rate: 0.75 },
            TeamEdge { src: 2, dst: 1, winning_rate: 0.5 },
            TeamEdge { src: 3, dst: 0, winning_rate: 1.0 },
        ];
        let graph = TeamGraph { teams: teams.clone(), edges: edges.clone() };
        let mut order = vec![TeamId(0); 5];
        for (i, &p) in perm.iter().enumerate() {
            order[p] = teams[i];
        }
        let pgraph = TeamGraph {
            teams: order,
            edges: edges.iter().map(|e| TeamEdge { src: perm[e.src], dst: perm[e.dst], ..*e }).collect(),
        };
        let mut t = Tape::new();
        let a = net.encode_teams(&mut t, &ps, &graph).unwrap();
        let b = net.encode_teams(&mut t, &ps, &pgraph).unwrap();
        prop_assert!(max_abs_diff(&permute_rows(t.value(a), &perm), t.value(b)) < 1e-9);
    }
}

#[test]
fn classify_inverts_win_and_lose_targets() {
    for o in [Outcome::Win, Outcome::Lose] {
        assert_eq!(classify(outcome_to_target(o)).unwrap(), o);
    }
    let t = Thresholds::SEVENTHS;
    assert_eq!(t.classify(4.0 / 7.0).unwrap(), Outcome::Draw);
    assert_eq!(t.classify(5.0 / 7.0).unwrap(), Outcome::Win);
}

#[test]
fn removing_an_edge_type_zeroes_its_weight_gradients() {
    let (net, ps) = small_player_net(3);
    let mut g = four_node_graph();
    g.edges.retain(|e| e.edge_type == EdgeType::Pass);
    let cg = CachedGraph::new(g, net.config.d_id);
    let mut t = Tape::new();
    let out = net.encode_local(&mut t, &ps, &cg.graph).unwrap();
    let r = t.constant(random_matrix(4, net.config.output, 5));
    let prod = t.mul(out, r);
    let loss = t.sum_all(prod);
    let grads = t.backward(loss);
    for layer in &net.local.layers {
        let gd = grads.get(layer.weights[EdgeType::Defense.index()]);
        assert!(gd.is_none_or(|m| m.iter().all(|&x| x == 0.0)));
        let gp = grads.get(layer.weights[EdgeType::Pass.index()]).expect("pass weights used");
        assert!(gp.iter().any(|&x| x != 0.0));
    }
}

#[test]
fn reversing_an_edge_negates_its_difference_identifier() {
    let (net, ps) = small_player_net(4);
    let cg = four_node_cached(net.config.d_id);
    let mut rev = cg.graph.clone();
    let e = rev.edges[0];
    rev.edges[0].src = e.dst;
    rev.edges[0].dst = e.src;
    let mut t = Tape::new();
    let a = net.augment_tokens(&mut t, &ps, &cg.graph, &cg.ids).unwrap();
    let b = net.augment_tokens(&mut t, &ps, &rev, &cg.ids).unwrap();
    let pk = ps.get(net.tables.edge_types);
    let row = cg.graph.node_count();
    for j in 0..net.config.d_id {
        let da = t.value(a.identifiers)[[row, j]] - pk[[e.edge_type.index(), j]];
        let db = t.value(b.identifiers)[[row, j]] - pk[[e.edge_type.index(), j]];
        assert_eq!(da, -db);
    }
}

#[test]
fn global_output_is_deterministic() {
    let (net, ps) = small_player_net(9);
    let cg = four_node_cached(net.config.d_id);
    let run = || {
        let mut t = Tape::new();
        let tokens = net.augment_tokens(&mut t, &ps, &cg.graph, &cg.ids).unwrap();
        let o = net.encode_global(&mut t, &ps, &tokens, GlobalMode::ClassToken, true).unwrap();
        t.value(o.output).clone()
    };
    assert_eq!(run(), run());
}

#[test]
fn role_matrix_ignores_within_group_order() {
    let cfg = quick_config(0, 0);
    let (model, ps) = Model::new(&cfg, vec![TeamId(1), TeamId(2)]).unwrap();
    let mut g = four_node_graph();
    g.nodes[1].role = g.nodes[0].role;
    let cg = CachedGraph::new(g, cfg.player.d_id);
    let swapped = permuted_cached(&cg, &[1, 0, 2, 3]);
    let a = attention_role_matrix(&model, &ps, [&cg]).unwrap();
    let b = attention_role_matrix(&model, &ps, [&swapped]).unwrap();
    for (ra, rb) in a.values.iter().zip(&b.values) {
        for (x, y) in ra.iter().zip(rb) {
            assert!((x - y).abs() < 1e-9);
        }
        assert!((ra.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn team_graph_ignores_test_results() {
    let league = small_league(21, 6, 2);
    let ds = &league.dataset;
    let base = build_team_graph(ds.train(), ds.teams());
    let mut all: Vec<_> = ds.matches().to_vec();
    for m in all.iter_mut() {
        if ds.is_test(m.match_id) {
            m.label = m.label.flipped();
        }
    }
    let train_ids: std::collections::BTreeSet<MatchId> = ds.train_ids().iter().copied().collect();
    let mutated = build_team_graph(all.iter().filter(|m| train_ids.contains(&m.match_id)), ds.teams());
    assert_eq!(base, mutated);
    let ids: BTreeMap<TeamId, usize> = base.teams.iter().enumerate().map(|(i, t)| (*t, i)).collect();
    assert_eq!(ids.len(), ds.teams().len());
}
