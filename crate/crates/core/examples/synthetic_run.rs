//! Trains on a synthetic league and prints test accuracy next to the
//! Bayes-optimal rate.
//!
//! `cargo run --release --example synthetic_run -- [stage1_steps] [stage2_steps] [seed]`

use std::time::Instant;

use higformer::data::synth::{synthesize_league, SynthConfig};
use higformer::graph::build_all_graphs;
use higformer::pipeline::train_all;
use higformer::training::TrainConfig;

fn main() -> higformer::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let seed = args.get(2).copied().unwrap_or(0) as u64;
    let league = synthesize_league(&SynthConfig {
        seed,
        ..SynthConfig::default()
    })?;
    let cfg = TrainConfig {
        stage1_steps: args.first().copied().unwrap_or(300),
        stage2_steps: args.get(1).copied().unwrap_or(1500),
        seed,
        ..TrainConfig::default()
    };
    let ds = &league.dataset;
    let t0 = Instant::now();
    let graphs = build_all_graphs(ds, &league.events, cfg.graph, cfg.player.d_id)?;
    println!("graphs: {} in {:.1?}", graphs.len(), t0.elapsed());
    let t1 = Instant::now();
    let trained = train_all(&cfg, ds, &graphs)?;
    println!("training: {:.1?}", t1.elapsed());
    let s1 = &trained.stage1;
    let tail = |v: &[f64]| v.iter().rev().take(20).sum::<f64>() / v.len().clamp(1, 20) as f64;
    println!("stage 1 tail losses: global {:.4} local {:.4}", tail(&s1.global_losses), tail(&s1.local_losses));
    println!("stage 2 tail loss: {:.4}", tail(&trained.stage2.losses));
    let p = trained.predictor(ds);
    let train = p.accuracy(ds.train_ids())?;
    let test = p.accuracy(ds.test_ids())?;
    println!("train accuracy {:.2}", train.total.avg.unwrap_or(f64::NAN));
    print!("{}", test.render());
    let hist = ds.label_histogram(ds.test_ids());
    let majority = 100.0 * *hist.iter().max().unwrap() as f64 / hist.iter().sum::<usize>() as f64;
    println!(
        "bayes (test) {:.2}  threshold bayes {:.2}  majority {:.2}",
        100.0 * league.manifest.bayes_accuracy_test,
        100.0 * league.manifest.threshold_accuracy_test,
        majority
    );
    Ok(())
}
