use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{pretrain_examples, team_graph_of, PipelineConfig};
use crate::data::synth::{synthesize_league, SyntheticLeague};
use crate::data::{build_match_dataset, parse_event_stream, read_match_metadata, write_event_stream, Dataset, EventRecord, MatchId, TeamId};
use crate::error::{Error, Result};
use crate::eval::{attention_role_matrix, substitution_analysis, team_test_fixtures, AccuracyReport, Distribution, FixturePrediction, Predictor, RoleAttentionMatrix, Substitution, SubstitutionReport};
use crate::graph::{build_all_graphs, read_graph_cache, write_graph_cache, CachedGraph, TeamGraph};
use crate::model::Model;
use crate::nn::ParamStore;
use crate::training::{
    encoder_hash, precompute_embeddings, stage1_pretrain, stage2_train, Checkpoint, EmbeddingStore, Stage, Stage1Report, Stage2Report,
};

/// Fixed layout of a run directory.
#[derive(Clone, Debug)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn new(root: &Path) -> Self {
        RunDir { root: root.to_path_buf() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn data_dir(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset.json")
    }

    /// Normalized copy of the ingested events.
    pub fn events(&self) -> PathBuf {
        self.root.join("events.jsonl")
    }

    pub fn graphs(&self) -> PathBuf {
        self.root.join("graphs")
    }

    pub fn team_graph(&self) -> PathBuf {
        self.root.join("team_graph.json")
    }

    pub fn stage1_checkpoint(&self) -> PathBuf {
        self.root.join("checkpoints").join("stage1.higf")
    }

    pub fn stage2_checkpoint(&self) -> PathBuf {
        self.root.join("checkpoints").join("stage2.higf")
    }

    pub fn embeddings(&self) -> PathBuf {
        self.root.join("embeddings.higf")
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn report(&self, name: &str) -> PathBuf {
        self.reports().join(name)
    }

    pub fn log_file(&self) -> PathBuf {
        self.root.join("run.log")
    }

    /// Appends one JSON line to `run.log`.
    pub fn log(&self, command: &str, message: &str) -> Result<()> {
        fs::create_dir_all(&self.root)?;
        let line = serde_json::json!({
            "time": chrono::Utc::now().to_rfc3339(),
            "command": command,
            "message": message,
        });
        let mut f = fs::OpenOptions::new().create(true).append(true).open(self.log_file())?;
        writeln!(f, "{line}")?;
        tracing::info!(command, "{message}");
        Ok(())
    }

    pub fn write_report<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.report(name);
        write_atomic(&path, &serde_json::to_vec_pretty(value)?)?;
        Ok(path)
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.report(name);
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }

    pub fn status(&self) -> RunStatus {
        RunStatus {
            dataset: self.dataset().exists(),
            graphs: self.team_graph().exists(),
            stage1: self.stage1_checkpoint().exists(),
            embeddings: self.embeddings().exists(),
            stage2: self.stage2_checkpoint().exists(),
        }
    }
}

/// Which artifacts of a run exist.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStatus {
    pub dataset: bool,
    pub graphs: bool,
    pub stage1: bool,
    pub embeddings: bool,
    pub stage2: bool,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::config(format!("{what} not found at {}", path.display())))
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    require(path, what)?;
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

pub fn load_dataset(cfg: &PipelineConfig) -> Result<Dataset> {
    read_json(&cfg.run().dataset(), "dataset (run `ingest`)")
}

pub fn load_events(cfg: &PipelineConfig) -> Result<Vec<EventRecord>> {
    let path = cfg.run().events();
    require(&path, "ingested events (run `ingest`)")?;
    parse_event_stream(&fs::read(path)?)
}

pub fn load_team_graph(cfg: &PipelineConfig) -> Result<TeamGraph> {
    read_json(&cfg.run().team_graph(), "team graph (run `build-graphs`)")
}

pub fn load_graphs(cfg: &PipelineConfig, ids: impl IntoIterator<Item = MatchId>) -> Result<BTreeMap<MatchId, CachedGraph>> {
    let dir = cfg.graph_dir();
    require(&dir, "graph cache (run `build-graphs`)")?;
    read_graph_cache(&dir, ids)
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    require(path, "checkpoint")?;
    Checkpoint::read(path)
}

/// Reads the event and match files named by the config, splits the matches
/// and stores the dataset in the run directory.
pub fn ingest(cfg: &PipelineConfig) -> Result<Dataset> {
    let (ev_path, meta_path) = (cfg.events_path(), cfg.matches_path());
    require(&ev_path, "event file")?;
    require(&meta_path, "match metadata file")?;
    let events = parse_event_stream(&fs::read(&ev_path)?)?;
    let meta = read_match_metadata(&fs::read(&meta_path)?)?;
    let ds = build_match_dataset(&events, &meta, cfg.split)?;
    let run = cfg.run();
    write_atomic(&run.dataset(), &serde_json::to_vec(&ds)?)?;
    let mut buf = Vec::new();
    write_event_stream(&mut buf, &events)?;
    write_atomic(&run.events(), &buf)?;
    let summary = serde_json::json!({
        "matches": ds.matches().len(),
        "events": events.len(),
        "train": ds.train_ids().len(),
        "test": ds.test_ids().len(),
        "train_labels": ds.label_histogram(ds.train_ids()),
        "test_labels": ds.label_histogram(ds.test_ids()),
        "teams": ds.teams().len(),
        "players": ds.players().len(),
    });
    run.write_report("ingest.json", &summary)?;
    run.log("ingest", &format!("{} matches, {} events", ds.matches().len(), events.len()))?;
    Ok(ds)
}

/// Generates a synthetic league into `<run>/data` and ingests it.
pub fn synth(cfg: &PipelineConfig) -> Result<SyntheticLeague> {
    let league = synthesize_league(&cfg.synth)?;
    let run = cfg.run();
    league.write(&run.data_dir())?;
    let local = PipelineConfig {
        events: None,
        matches: None,
        ..cfg.clone()
    };
    ingest(&local)?;
    run.log(
        "synth",
        &format!(
            "{} teams, {} fixtures, test Bayes accuracy {:.2}",
            cfg.synth.n_teams,
            league.manifest.fixtures.len(),
            league.manifest.bayes_accuracy_test
        ),
    )?;
    Ok(league)
}

/// Builds and caches the interaction graph of every match plus the team
/// graph of the training split.
pub fn build_graphs(cfg: &PipelineConfig) -> Result<usize> {
    let ds = load_dataset(cfg)?;
    let events = load_events(cfg)?;
    let graphs = build_all_graphs(&ds, &events, cfg.train.graph, cfg.train.player.d_id)?;
    write_graph_cache(&cfg.graph_dir(), &graphs)?;
    let team = team_graph_of(&ds);
    write_atomic(&cfg.run().team_graph(), &serde_json::to_vec_pretty(&team)?)?;
    cfg.run()
        .log("build-graphs", &format!("{} player graphs, {} team edges", graphs.len(), team.edges.len()))?;
    Ok(graphs.len())
}

/// Stage 1. A diverged run still writes its last finite parameters, flagged.
pub fn pretrain(cfg: &PipelineConfig) -> Result<Stage1Report> {
    let ds = load_dataset(cfg)?;
    let graphs = load_graphs(cfg, ds.train_ids().iter().copied())?;
    let teams: Vec<TeamId> = ds.teams().into_iter().collect();
    let (model, mut ps) = Model::new(&cfg.train, teams)?;
    let examples = pretrain_examples(&ds, &graphs)?;
    let run = cfg.run();
    let result = stage1_pretrain(&model, &mut ps, &examples);
    let mut ck = Checkpoint::new(Stage::Stage1, &model, &ps);
    match result {
        Ok(report) => {
            ck.rng = report.rng.clone();
            ck.steps.stage1 = report.steps;
            ck.write(&run.stage1_checkpoint())?;
            run.write_report("stage1.json", &report)?;
            run.log(
                "pretrain",
                &format!(
                    "{} steps, final losses global {:.4} local {:.4}",
                    report.steps,
                    report.global_losses.last().copied().unwrap_or(f64::NAN),
                    report.local_losses.last().copied().unwrap_or(f64::NAN)
                ),
            )?;
            Ok(report)
        }
        Err(e) => {
            if let Error::Diverged { step, .. } = &e {
                ck.diverged = true;
                ck.steps.stage1 = *step;
                ck.write(&run.stage1_checkpoint())?;
                run.log("pretrain", &format!("diverged: {e}"))?;
            }
            Err(e)
        }
    }
}

/// Runs the frozen stage-1 encoders over every cached graph.
pub fn precompute(cfg: &PipelineConfig) -> Result<EmbeddingStore> {
    let ds = load_dataset(cfg)?;
    let ck = load_checkpoint(&cfg.run().stage1_checkpoint())?;
    let (model, ps) = ck.model()?;
    let graphs = load_graphs(cfg, ds.matches().iter().map(|m| m.match_id))?;
    let store = precompute_embeddings(&model, &ps, &graphs)?;
    store.write(&cfg.run().embeddings())?;
    cfg.run().log("precompute", &format!("{} player-match embeddings", store.len()))?;
    Ok(store)
}

/// Stage 2, running any missing earlier stage first.
pub fn train(cfg: &PipelineConfig) -> Result<Stage2Report> {
    let run = cfg.run();
    if !run.dataset().exists() {
        ingest(cfg)?;
    }
    if !run.team_graph().exists() || !cfg.graph_dir().exists() {
        build_graphs(cfg)?;
    }
    if !run.stage1_checkpoint().exists() {
        pretrain(cfg)?;
    }
    let ck1 = load_checkpoint(&run.stage1_checkpoint())?;
    let (model, mut ps) = ck1.model_with(&cfg.train)?;
    let store = match EmbeddingStore::read(&run.embeddings()) {
        Ok(s) if s.source == encoder_hash(&ps) => s,
        _ => precompute(cfg)?,
    };
    let ds = load_dataset(cfg)?;
    let team_graph = load_team_graph(cfg)?;
    let result = stage2_train(&model, &mut ps, &store, &team_graph, &ds);
    let mut ck = Checkpoint::new(Stage::Stage2, &model, &ps);
    ck.steps.stage1 = ck1.steps.stage1;
    match result {
        Ok(report) => {
            ck.rng = report.rng.clone();
            ck.steps.stage2 = report.steps;
            ck.write(&run.stage2_checkpoint())?;
            run.write_report("stage2.json", &report)?;
            run.log(
                "train",
                &format!("{} steps, final loss {:.4}", report.steps, report.losses.last().copied().unwrap_or(f64::NAN)),
            )?;
            Ok(report)
        }
        Err(e) => {
            if let Error::Diverged { step, .. } = &e {
                ck.diverged = true;
                ck.steps.stage2 = *step;
                ck.write(&run.stage2_checkpoint())?;
                run.log("train", &format!("diverged: {e}"))?;
            }
            Err(e)
        }
    }
}

/// A loaded checkpoint with the dataset, embeddings and team graph it needs.
/// Never written back.
pub struct Snapshot {
    pub checkpoint: Checkpoint,
    pub model: Model,
    pub params: ParamStore,
    pub store: EmbeddingStore,
    pub team_graph: TeamGraph,
    pub dataset: Dataset,
}

impl Snapshot {
    /// Loads the configured checkpoint. Embeddings that were not produced by
    /// its encoders are recomputed in memory from the graph cache.
    pub fn load(cfg: &PipelineConfig) -> Result<Self> {
        let checkpoint = load_checkpoint(&cfg.checkpoint_path())?;
        let (model, params) = checkpoint.model()?;
        let dataset = load_dataset(cfg)?;
        let team_graph = load_team_graph(cfg)?;
        let store = match EmbeddingStore::read(&cfg.run().embeddings()) {
            Ok(s) if s.source == encoder_hash(&params) => s,
            _ => {
                let graphs = load_graphs(cfg, dataset.matches().iter().map(|m| m.match_id))?;
                precompute_embeddings(&model, &params, &graphs)?
            }
        };
        Ok(Snapshot {
            checkpoint,
            model,
            params,
            store,
            team_graph,
            dataset,
        })
    }

    pub fn predictor(&self) -> Predictor<'_> {
        Predictor {
            model: &self.model,
            ps: &self.params,
            store: &self.store,
            team_graph: &self.team_graph,
            ds: &self.dataset,
        }
    }

    /// True when the outcome head never took an optimizer step.
    pub fn head_untrained(&self) -> bool {
        self.checkpoint.stage != Stage::Stage2 || self.checkpoint.steps.stage2 == 0
    }

    pub fn encoders_untrained(&self) -> bool {
        self.checkpoint.steps.stage1 == 0
    }

    /// Team-perspective outcome distribution over each team's test fixtures.
    pub fn baselines(&self) -> Result<BTreeMap<TeamId, Option<Distribution>>> {
        let p = self.predictor();
        self.dataset
            .teams()
            .into_iter()
            .map(|team| {
                let fixtures = team_test_fixtures(&p, team, None);
                if fixtures.is_empty() {
                    return Ok((team, None));
                }
                let r = substitution_analysis(&p, team, None, &[], &fixtures)?;
                Ok((team, Some(r.baseline)))
            })
            .collect()
    }
}

pub const UNTRAINED_WARNING: &str = "WARNING: this checkpoint is untrained; results are meaningless";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Evaluation {
    pub untrained: bool,
    pub report: AccuracyReport,
    pub predictions: Vec<FixturePrediction>,
}

impl Evaluation {
    pub fn render(&self) -> String {
        let mut s = String::new();
        if self.untrained {
            s.push_str(UNTRAINED_WARNING);
            s.push('\n');
        }
        s.push_str(&self.report.render());
        s
    }
}

/// Per-class accuracy of the configured checkpoint on the test split.
pub fn evaluate(cfg: &PipelineConfig) -> Result<Evaluation> {
    let snap = Snapshot::load(cfg)?;
    let untrained = snap.head_untrained();
    if untrained {
        tracing::warn!("{UNTRAINED_WARNING}");
    }
    let predictions = snap.predictor().predict_all(snap.dataset.test_ids())?;
    let ev = Evaluation {
        untrained,
        report: crate::eval::report_from(&predictions)?,
        predictions,
    };
    let run = cfg.run();
    run.write_report("evaluation.json", &ev)?;
    run.write_text("evaluation.txt", &ev.render())?;
    let avg = ev.report.total.avg.unwrap_or(f64::NAN);
    run.log("evaluate", &format!("test accuracy {avg:.2}"))?;
    Ok(ev)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AttentionReport {
    pub untrained: bool,
    pub matrix: RoleAttentionMatrix,
    pub column_means: Vec<f64>,
}

/// Role-grouped attention over the test graphs.
pub fn attention_report(cfg: &PipelineConfig) -> Result<AttentionReport> {
    let snap = Snapshot::load(cfg)?;
    let untrained = snap.encoders_untrained();
    if untrained {
        tracing::warn!("{UNTRAINED_WARNING}");
    }
    let graphs = load_graphs(cfg, snap.dataset.test_ids().iter().copied())?;
    let matrix = attention_role_matrix(&snap.model, &snap.params, graphs.values())?;
    let report = AttentionReport {
        untrained,
        column_means: matrix.column_means(),
        matrix,
    };
    let run = cfg.run();
    run.write_report("attention.json", &report)?;
    let mut text = String::new();
    if untrained {
        text.push_str(UNTRAINED_WARNING);
        text.push('\n');
    }
    text.push_str(&report.matrix.render());
    run.write_text("attention.txt", &text)?;
    run.log("attention-report", &format!("{} test graphs", graphs.len()))?;
    Ok(report)
}

/// Substitution analysis over the team's test fixtures; the JSON report is
/// written to `reports/substitution.json`.
pub fn substitute(cfg: &PipelineConfig, team: TeamId, opponent: Option<TeamId>, subs: &[Substitution]) -> Result<SubstitutionReport> {
    let snap = Snapshot::load(cfg)?;
    let p = snap.predictor();
    let fixtures = team_test_fixtures(&p, team, opponent);
    let report = substitution_analysis(&p, team, opponent, subs, &fixtures)?;
    let run = cfg.run();
    run.write_report("substitution.json", &report)?;
    run.write_text("substitution.txt", &report.render(&format!("Team {team}"), &|q| q.to_string()))?;
    run.log("substitute", &format!("team {team}, {} substitutions", subs.len()))?;
    Ok(report)
}
