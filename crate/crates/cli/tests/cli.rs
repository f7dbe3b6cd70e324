use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mia_core::{read_run, MembershipModel};
use serde_json::Value;

fn mia(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mia")).args(args).env_remove("MIA_BACKEND_URL").output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = mia(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn code(args: &[&str]) -> i32 {
    mia(args).status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn mock(dir: &Path, pairs: &str, seed: &str, four: bool) {
    let mut args = vec!["mock-dataset", "--pairs", pairs, "--side", "16", "--seed", seed, "--out-dir", p(dir)];
    if four {
        args.push("--four-groups");
    }
    ok(&args);
}

fn probe(dir: &Path, out: &str, extra: &[&str]) {
    let manifest = dir.join("manifest.json");
    let run = dir.join(out);
    let mut args = vec!["probe", "--manifest", p(&manifest), "-n", "3", "--seed", "5", "--out", p(&run)];
    args.extend_from_slice(extra);
    ok(&args);
}

#[test]
fn mock_dataset_is_complete_and_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    mock(a.path(), "10", "4", false);
    mock(b.path(), "10", "4", false);
    let pngs: Vec<_> = fs::read_dir(a.path().join("images")).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(pngs.len(), 20);
    for name in pngs {
        assert_eq!(fs::read(a.path().join("images").join(&name)).unwrap(), fs::read(b.path().join("images").join(&name)).unwrap());
    }
    for f in ["manifest.json", "memory.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
    }
    let manifest = mia_core::load_manifest(&a.path().join("manifest.json")).unwrap();
    assert_eq!(manifest.records.len(), 20);
}

#[test]
fn probe_end_to_end_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    mock(dir.path(), "10", "1", false);
    let manifest = dir.path().join("manifest.json");
    for (out, workers) in [("a.jsonl", "1"), ("b.jsonl", "3")] {
        let run = dir.path().join(out);
        ok(&["probe", "--manifest", p(&manifest), "--schedule", "sd", "-n", "10", "--concurrency", workers, "--out", p(&run)]);
    }
    let a = fs::read(dir.path().join("a.jsonl")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.jsonl")).unwrap());
    let (header, records) = read_run(&dir.path().join("a.jsonl")).unwrap();
    assert_eq!(header.n, 10);
    assert_eq!(header.schedule_label, "sd");
    assert_eq!(records.len(), 20);
    assert!(records.iter().all(|r| r.distance_vector.len() == 6));
}

#[test]
fn probe_reports_progress_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    mock(dir.path(), "2", "1", false);
    let manifest = dir.path().join("manifest.json");
    let run = dir.path().join("r.jsonl");
    let out = ok(&["probe", "--manifest", p(&manifest), "-n", "1", "--out", p(&run)]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("[4/4]"), "{stderr}");
    assert!(out.stdout.is_empty());
}

#[test]
fn stats_reports_and_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    mock(dir.path(), "10", "2", false);
    probe(dir.path(), "run.jsonl", &[]);
    let run = dir.path().join("run.jsonl");
    let report = dir.path().join("report.json");
    let csv = dir.path().join("d.csv");
    ok(&["stats", "--run", p(&run), "--out", p(&report), "--plot-data", p(&csv)]);
    let v: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let rows = v["per_strength"].as_array().unwrap();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r["df"] == 18));
    let lines = fs::read_to_string(&csv).unwrap().lines().count();
    assert_eq!(lines, 1 + 6 * 2 * 200);

    let out = ok(&["stats", "--run", p(&run), "--group-a", "out_of_training", "--group-b", "out_of_training"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    for r in v["per_strength"].as_array().unwrap() {
        assert_eq!((r["t"].as_f64(), r["d"].as_f64(), r["p"].as_f64()), (Some(0.0), Some(0.0), Some(1.0)));
    }
}

#[test]
fn stats_on_a_missing_group_is_a_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    mock(dir.path(), "3", "2", false);
    probe(dir.path(), "run.jsonl", &[]);
    let run = dir.path().join("run.jsonl");
    assert_eq!(code(&["stats", "--run", p(&run), "--group-b", "out_of_training_generated"]), 4);
    assert_eq!(code(&["stats", "--run", p(&run), "--group-b", "nonsense"]), 2);
}

#[test]
fn train_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    mock(dir.path(), "12", "3", true);
    probe(dir.path(), "run.jsonl", &[]);
    let run = dir.path().join("run.jsonl");
    let model = dir.path().join("model.json");
    ok(&["train", "--run", p(&run), "--out", p(&model)]);
    let loaded = MembershipModel::load(&model).unwrap();
    assert_eq!(loaded.weights.len(), 6);
    assert_eq!(loaded.schedule_label, "sd");

    let out = ok(&["eval", "--run", p(&run), "--model", p(&model)]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["accuracy_at_eer"].as_f64().unwrap() > 0.5);
    assert_eq!((v["n_in"].as_u64(), v["n_out"].as_u64()), (Some(24), Some(24)));

    let summary = dir.path().join("summary.json");
    ok(&["eval", "--run", p(&run), "--self-eval", "--splits", "5", "--out", p(&summary)]);
    let v: Value = serde_json::from_str(&fs::read_to_string(&summary).unwrap()).unwrap();
    assert!(v["accuracy_at_eer_mean"].is_number());
    assert_eq!(v["n_splits"], 5);
}

#[test]
fn label_map_selects_groups() {
    let dir = tempfile::tempdir().unwrap();
    mock(dir.path(), "6", "3", true);
    probe(dir.path(), "run.jsonl", &[]);
    let run = dir.path().join("run.jsonl");
    let labels = dir.path().join("labels.json");
    fs::write(&labels, r#"{"in_training": "in", "out_of_training_generated": "out"}"#).unwrap();
    let out = ok(&["eval", "--run", p(&run), "--self-eval", "--splits", "3", "--label-map", p(&labels)]);
    assert!(serde_json::from_slice::<Value>(&out.stdout).is_ok());
    fs::write(&labels, r#"{"in_training": "maybe"}"#).unwrap();
    assert_eq!(code(&["eval", "--run", p(&run), "--self-eval", "--label-map", p(&labels)]), 4);
}

#[test]
fn model_and_run_schedules_must_agree() {
    let dir = tempfile::tempdir().unwrap();
    mock(dir.path(), "6", "3", false);
    probe(dir.path(), "sd.jsonl", &[]);
    probe(dir.path(), "custom.jsonl", &["--schedule", "0.1,0.3,0.5,0.7,0.9,1.0"]);
    let model = dir.path().join("model.json");
    ok(&["train", "--run", p(&dir.path().join("sd.jsonl")), "--out", p(&model)]);
    assert_eq!(code(&["eval", "--run", p(&dir.path().join("custom.jsonl")), "--model", p(&model)]), 4);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    mock(dir.path(), "2", "1", false);
    let manifest = dir.path().join("manifest.json");
    let out = dir.path().join("r.jsonl");
    let base = ["probe", "--manifest", p(&manifest), "-n", "1", "--out", p(&out)];
    let with = |extra: &[&'static str]| base.iter().copied().chain(extra.iter().copied()).collect::<Vec<&str>>();

    assert_eq!(code(&with(&["--schedule", "midjourney"])), 4);
    assert_eq!(code(&with(&["--schedule", "0.5,0.2"])), 2);
    assert_eq!(code(&with(&["--schedule", "abc"])), 2);
    assert_eq!(code(&with(&["--backend", "remote"])), 2);
    assert_eq!(code(&with(&["--backend", "remote", "--backend-url", "http://127.0.0.1:9"])), 3);
    assert_eq!(code(&with(&["--metric", "remote"])), 2);
    assert_eq!(code(&["eval", "--run", p(&out)]), 2);
    assert_eq!(code(&["probe", "--manifest", "/nonexistent/manifest.json", "--out", p(&out)]), 1);

    fs::write(dir.path().join("images/in_0000.png"), b"garbage").unwrap();
    assert_eq!(code(&base), 4);
}

#[test]
fn backend_url_falls_back_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    mock(dir.path(), "1", "1", false);
    let manifest = dir.path().join("manifest.json");
    let out = dir.path().join("r.jsonl");
    let output = Command::new(env!("CARGO_BIN_EXE_mia"))
        .args(["probe", "--manifest", p(&manifest), "--backend", "remote", "-n", "1", "--out", p(&out)])
        .env("MIA_BACKEND_URL", "http://127.0.0.1:9")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&output.stderr).contains("127.0.0.1:9"));
}

#[test]
fn help_lists_every_flag() {
    let text = |sub: &str| String::from_utf8(ok(&[sub, "--help"]).stdout).unwrap();
    for (sub, flags) in [
        ("mock-dataset", &["--pairs", "--side", "--seed", "--out-dir"][..]),
        ("probe", &["--manifest", "--backend", "--metric", "--schedule", "-n", "--seed", "--out"][..]),
        ("stats", &["--run", "--group-a", "--group-b", "--out", "--plot-data"][..]),
        ("train", &["--run", "--label-map", "--out"][..]),
        ("eval", &["--run", "--model", "--self-eval", "--fpr", "--splits"][..]),
    ] {
        let help = text(sub);
        for flag in flags {
            assert!(help.contains(flag), "{sub} --help lacks {flag}");
        }
    }
    assert!(text("probe").contains("MIA_BACKEND_URL"));
}
