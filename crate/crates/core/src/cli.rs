//! Command-line front end. Usage errors exit with 2, pipeline errors with 1.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::data::{PlayerId, TeamId};
use crate::error::Result;
use crate::eval::Substitution;
use crate::pipeline::{self, PipelineConfig};
use crate::service::{serve, AppState, Loaded};

#[derive(Debug, Parser)]
#[command(name = "higformer", version, about = "Pre-match soccer outcome prediction from player and team interaction graphs")]
pub struct Cli {
    /// TOML pipeline configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run directory holding all artifacts.
    #[arg(long, global = true, env = "HIGFORMER_RUN_DIR")]
    pub run_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse events and match metadata, split per division, store the dataset.
    Ingest {
        #[arg(long)]
        events: Option<PathBuf>,
        #[arg(long)]
        matches: Option<PathBuf>,
        #[arg(long)]
        train_fraction: Option<f64>,
    },
    /// Build and cache player interaction graphs and the team graph.
    BuildGraphs,
    /// Stage 1: pretrain the global and local player encoders.
    Pretrain {
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Compute per-player embeddings with the frozen stage-1 encoders.
    Precompute,
    /// Stage 2, running any missing earlier stage first.
    Train {
        #[arg(long)]
        stage1_steps: Option<usize>,
        #[arg(long)]
        stage2_steps: Option<usize>,
        /// Discard existing checkpoints and embeddings first.
        #[arg(long)]
        fresh: bool,
    },
    /// Per-class test accuracy.
    Evaluate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Role-grouped attention of the global encoder on test graphs.
    AttentionReport {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Outcome shift over a team's test fixtures after substitutions.
    Substitute {
        #[arg(long)]
        team: i64,
        /// Incoming player; pairs with the `--out` at the same position.
        #[arg(long = "in")]
        in_players: Vec<i64>,
        #[arg(long = "out")]
        out_players: Vec<i64>,
        #[arg(long)]
        opponent: Option<i64>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Generate a synthetic league into the run directory and ingest it.
    Synth {
        #[arg(long)]
        teams: Option<usize>,
        #[arg(long)]
        players: Option<usize>,
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long)]
        spread: Option<f64>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

/// Configuration from `--config`, then global overrides.
pub fn resolve_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
        cfg.synth.seed = seed;
    }
    if let Some(dir) = &cli.run_dir {
        cfg.run_dir = dir.clone();
    }
    Ok(cfg)
}

fn usage(message: &str) -> i32 {
    eprintln!("error: {message}");
    2
}

/// Parses `argv` and runs the command, returning the exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    if let Command::Substitute { in_players, out_players, .. } = &cli.command {
        if in_players.len() != out_players.len() {
            return usage("--in and --out must be given the same number of times");
        }
    }
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let mut cfg = resolve_config(cli)?;
    match &cli.command {
        Command::Ingest {
            events,
            matches,
            train_fraction,
        } => {
            if events.is_some() {
                cfg.events = events.clone();
            }
            if matches.is_some() {
                cfg.matches = matches.clone();
            }
            if let Some(f) = train_fraction {
                cfg.split.train_fraction = *f;
            }
            cfg.validate()?;
            let ds = pipeline::ingest(&cfg)?;
            println!(
                "ingested {} matches ({} train, {} test) into {}",
                ds.matches().len(),
                ds.train_ids().len(),
                ds.test_ids().len(),
                cfg.run_dir.display()
            );
        }
        Command::BuildGraphs => {
            let n = pipeline::build_graphs(&cfg)?;
            println!("cached {n} player graphs in {}", cfg.graph_dir().display());
        }
        Command::Pretrain { steps } => {
            if let Some(s) = steps {
                cfg.train.stage1_steps = *s;
            }
            let r = pipeline::pretrain(&cfg)?;
            println!("stage 1: {} steps, checkpoint {}", r.steps, cfg.run().stage1_checkpoint().display());
        }
        Command::Precompute => {
            let s = pipeline::precompute(&cfg)?;
            println!("stored {} embeddings in {}", s.len(), cfg.run().embeddings().display());
        }
        Command::Train {
            stage1_steps,
            stage2_steps,
            fresh,
        } => {
            if let Some(s) = stage1_steps {
                cfg.train.stage1_steps = *s;
            }
            if let Some(s) = stage2_steps {
                cfg.train.stage2_steps = *s;
            }
            cfg.validate()?;
            let run = cfg.run();
            if *fresh {
                for p in [run.stage1_checkpoint(), run.stage2_checkpoint(), run.embeddings()] {
                    if p.exists() {
                        std::fs::remove_file(p)?;
                    }
                }
            }
            let r = pipeline::train(&cfg)?;
            println!(
                "stage 2: {} steps, final loss {:.4}, checkpoint {}",
                r.steps,
                r.losses.last().copied().unwrap_or(f64::NAN),
                run.stage2_checkpoint().display()
            );
        }
        Command::Evaluate { checkpoint } => {
            if checkpoint.is_some() {
                cfg.checkpoint = checkpoint.clone();
            }
            let ev = pipeline::evaluate(&cfg)?;
            print!("{}", ev.render());
        }
        Command::AttentionReport { checkpoint } => {
            if checkpoint.is_some() {
                cfg.checkpoint = checkpoint.clone();
            }
            let r = pipeline::attention_report(&cfg)?;
            if r.untrained {
                println!("{}", pipeline::UNTRAINED_WARNING);
            }
            print!("{}", r.matrix.render());
        }
        Command::Substitute {
            team,
            in_players,
            out_players,
            opponent,
            checkpoint,
        } => {
            if checkpoint.is_some() {
                cfg.checkpoint = checkpoint.clone();
            }
            let subs: Vec<Substitution> = out_players
                .iter()
                .zip(in_players)
                .map(|(o, i)| Substitution {
                    out_player: PlayerId(*o),
                    in_player: PlayerId(*i),
                })
                .collect();
            let team = TeamId(*team);
            let r = pipeline::substitute(&cfg, team, opponent.map(TeamId), &subs)?;
            print!("{}", r.render(&format!("Team {team}"), &|p| p.to_string()));
            println!("report: {}", cfg.run().report("substitution.json").display());
        }
        Command::Synth {
            teams,
            players,
            rounds,
            spread,
        } => {
            if let Some(v) = teams {
                cfg.synth.n_teams = *v;
            }
            if let Some(v) = players {
                cfg.synth.n_players_per_team = *v;
            }
            if let Some(v) = rounds {
                cfg.synth.n_rounds = *v;
            }
            if let Some(v) = spread {
                cfg.synth.strength_spread = *v;
            }
            cfg.validate()?;
            let league = pipeline::synth(&cfg)?;
            println!(
                "synthesized {} matches into {}; Bayes-optimal test accuracy {:.2}%",
                league.manifest.fixtures.len(),
                cfg.run().data_dir().display(),
                100.0 * league.manifest.bayes_accuracy_test
            );
        }
        Command::Serve { bind, checkpoint } => {
            if checkpoint.is_some() {
                cfg.checkpoint = checkpoint.clone();
            }
            let bind = bind.clone().unwrap_or_else(|| cfg.bind.clone());
            let snapshot = pipeline::Snapshot::load(&cfg)?;
            let state = AppState::new(Loaded::new(snapshot)?);
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(serve(state, &bind))?;
        }
    }
    Ok(())
}
