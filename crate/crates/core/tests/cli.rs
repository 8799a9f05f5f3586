//! The `dstaug` binary end to end.

mod common;

use std::path::Path;
use std::process::{Command, Output};

use dstaug::complicate::LabeledDialogue;
use dstaug::eval::{self, EvalReport, PredictionRecord};
use dstaug::jsonl;
use tempfile::TempDir;

fn dstaug(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dstaug")).args(args).output().expect("binary runs")
}

/// The shipped config with its output redirected into `dir`.
fn config_in(dir: &Path) -> String {
    let fixtures = common::fixtures();
    let mut value: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fixtures.join("pipeline.json")).unwrap()).unwrap();
    value["schema_path"] = fixtures.join("schema.json").to_string_lossy().into();
    value["db_dir"] = fixtures.join("db").to_string_lossy().into();
    value["backend"]["cassette"] = fixtures.join("cassettes/pipeline.jsonl").to_string_lossy().into();
    value["output_dir"] = dir.join("out").to_string_lossy().into();
    let path = dir.join("config.json");
    std::fs::write(&path, value.to_string()).unwrap();
    path.to_string_lossy().into_owned()
}

fn text(out: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr))
}

#[test]
fn run_all_then_eval() {
    let dir = TempDir::new().unwrap();
    let config = config_in(dir.path());
    let out = dstaug(&["--config", &config, "run-all"]);
    assert!(out.status.success(), "{}", text(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    for stage in ["judge", "seed", "synth", "goal", "flow", "dialogue", "complicate", "augment"] {
        assert!(stdout.lines().any(|l| l.starts_with(stage)), "no summary for {stage}:\n{stdout}");
    }

    let labeled_path = dir.path().join("out/labeled.jsonl");
    let labeled: Vec<LabeledDialogue> = jsonl::read(&labeled_path).unwrap();
    let preds: Vec<PredictionRecord> = eval::gold_turns(&labeled)
        .into_iter()
        .map(|g| PredictionRecord { dialogue_id: g.dialogue_id, turn_index: g.turn_index, predicted_belief: g.belief })
        .collect();
    let preds_path = dir.path().join("preds.jsonl");
    jsonl::write(&preds_path, &preds).unwrap();
    let report_path = dir.path().join("report.json");
    let out = dstaug(&[
        "eval",
        "--gold",
        labeled_path.to_str().unwrap(),
        "--predictions",
        preds_path.to_str().unwrap(),
        "--output",
        report_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", text(&out));
    let report: EvalReport = serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report.jga, Some(1.0));
    assert_eq!(report.coref_acc, Some(1.0));
}

#[test]
fn single_stage_via_flag_and_resume() {
    let dir = TempDir::new().unwrap();
    let config = config_in(dir.path());
    let out = dstaug(&["--config", &config, "--stage", "judge"]);
    assert!(out.status.success(), "{}", text(&out));
    assert!(dir.path().join("out/judgments.jsonl").exists());
    let out = dstaug(&["--config", &config, "judge", "--resume"]);
    assert!(out.status.success(), "{}", text(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("reused=20 llm_requests=0"), "{}", text(&out));
}

#[test]
fn failures_exit_nonzero() {
    let dir = TempDir::new().unwrap();
    let config = config_in(dir.path());
    let cases: [&[&str]; 4] = [
        &["--config", &config, "flow"],
        &["judge"],
        &["--config", "/nonexistent/config.json", "judge"],
        &["eval", "--gold", "/nonexistent/labeled.jsonl", "--predictions", "/nonexistent/preds.jsonl"],
    ];
    for args in cases {
        let out = dstaug(args);
        assert!(!out.status.success(), "{args:?} succeeded");
        assert!(String::from_utf8_lossy(&out.stderr).contains("error"), "{args:?}: {}", text(&out));
    }
}
