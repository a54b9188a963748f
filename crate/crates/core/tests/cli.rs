use std::path::Path;
use std::process::{Command, Output};

use higformer::eval::{substitution_analysis, team_test_fixtures, Substitution};
use higformer::pipeline::{PipelineConfig, Snapshot, UNTRAINED_WARNING};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_higformer"));
    c.env_remove("HIGFORMER_RUN_DIR");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    let out = bin().arg("--run-dir").arg(dir).args(args).output().expect("binary runs");
    if !out.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SYNTH: &[&str] = &["--seed", "4", "synth", "--teams", "4", "--rounds", "2", "--players", "12"];

#[test]
fn synth_train_evaluate_substitute() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    let out = run(dir, SYNTH);
    assert!(out.status.success());
    assert!(stdout(&out).contains("Bayes-optimal test accuracy"));
    assert!(dir.join("data/events.jsonl").exists());
    assert!(dir.join("dataset.json").exists());

    let out = run(dir, &["--seed", "4", "train", "--stage1-steps", "5", "--stage2-steps", "0"]);
    assert!(out.status.success());
    let out = run(dir, &["evaluate"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains(UNTRAINED_WARNING));

    let out = run(dir, &["--seed", "4", "train", "--stage1-steps", "5", "--stage2-steps", "12"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(dir, &["evaluate"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(!text.contains(UNTRAINED_WARNING));
    assert!(text.contains("Total"));
    assert!(dir.join("reports/evaluation.json").exists());

    let out = run(dir, &["attention-report"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("HM-GK"));

    let cfg = PipelineConfig {
        run_dir: dir.to_path_buf(),
        ..PipelineConfig::default()
    };
    let snap = Snapshot::load(&cfg).unwrap();
    let p = snap.predictor();
    let team = *snap.dataset.teams().iter().next().unwrap();
    let fixtures = team_test_fixtures(&p, team, None);
    let rec = snap.dataset.match_record(fixtures[0]).unwrap();
    let side = rec.side_of_team(team).unwrap();
    let out_player = rec.players(side)[0];
    let in_player = snap
        .dataset
        .players()
        .into_iter()
        .find(|q| !rec.players(side).contains(q) && snap.dataset.matches_of(*q).next().is_some_and(|m| !snap.dataset.is_test(m.match_id)))
        .unwrap();
    let subs = [Substitution { out_player, in_player }];
    let direct = substitution_analysis(&p, team, None, &subs, &fixtures).unwrap();

    let out = run(
        dir,
        &[
            "substitute",
            "--team",
            &team.0.to_string(),
            "--out",
            &out_player.0.to_string(),
            "--in",
            &in_player.0.to_string(),
        ],
    );
    assert!(out.status.success());
    let written = std::fs::read(dir.join("reports/substitution.json")).unwrap();
    assert_eq!(written, serde_json::to_vec_pretty(&direct).unwrap());
    assert!(stdout(&out).contains(&format!("→ {in_player} (for {out_player})")));

    let out = run(dir, &["substitute", "--team", "999999"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(tmp.path(), &["no-such-command"]).status.code(), Some(2));
    assert_eq!(run(tmp.path(), &["substitute", "--team", "1", "--in", "3"]).status.code(), Some(2));
    assert_eq!(run(tmp.path(), &["train", "--stage1-steps", "many"]).status.code(), Some(2));
}

#[test]
fn pipeline_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), &["evaluate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let out = run(tmp.path(), &["ingest", "--events", "/nonexistent/events.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn run_dir_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin().env("HIGFORMER_RUN_DIR", tmp.path()).args(SYNTH).output().unwrap();
    assert!(out.status.success());
    assert!(tmp.path().join("data/events.jsonl").exists());
}

#[test]
fn same_seed_gives_identical_artifacts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        assert!(run(dir, SYNTH).status.success());
        assert!(run(dir, &["--seed", "4", "train", "--stage1-steps", "4", "--stage2-steps", "6"]).status.success());
        assert!(run(dir, &["evaluate"]).status.success());
    }
    for file in ["data/events.jsonl", "dataset.json", "reports/evaluation.json", "reports/stage2.json"] {
        let x = std::fs::read(a.path().join(file)).unwrap();
        let y = std::fs::read(b.path().join(file)).unwrap();
        assert!(x == y, "{file} differs between runs");
    }
}
