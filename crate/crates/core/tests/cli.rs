use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = "seed = 3\nmc_samples = 5\n\n[synth]\nskus = 2\nweeks = 6\n\n[synth.deviation]\nshift = [[0, 1.0]]\nratio_mean = 1.0\nratio_spread = 0.0\nlead_time = [[2, 1.0]]\ndemand_wmape = 0.0\n\n[training]\nepochs = 1\n";

fn gsp(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gsp"))
        .current_dir(root)
        .args(args)
        .env_remove("GSP_THREADS")
        .output()
        .unwrap()
}

fn ok(root: &Path, args: &[&str]) -> String {
    let out = gsp(root, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), CONFIG).unwrap();
    ok(dir.path(), &["synth", "--config", "run.toml", "--out", "data"]);
    dir
}

fn metric(csv: &str, name: &str) -> String {
    csv.lines()
        .find_map(|l| l.strip_prefix(&format!("{name},")))
        .unwrap_or_else(|| panic!("{name} missing in {csv}"))
        .to_string()
}

#[test]
fn passthrough_on_exact_plans_scores_zero() {
    let dir = workspace();
    let root = dir.path();
    ok(
        root,
        &[
            "baseline",
            "--method",
            "passthrough",
            "--data",
            "data",
            "--out",
            "planned",
        ],
    );
    let table = ok(
        root,
        &[
            "evaluate",
            "--data",
            "data",
            "--predictions",
            "planned",
            "--out",
            "eval",
        ],
    );
    assert!(table.contains("smace"));
    let csv = fs::read_to_string(root.join("eval/metrics.csv")).unwrap();
    assert_eq!(metric(&csv, "smace"), "0.000000");
    assert_eq!(metric(&csv, "wmape"), "0.000000");
    assert_eq!(metric(&csv, "generalized_smace"), "0.000000");
}

#[test]
fn predict_writes_one_file_per_sample() {
    let dir = workspace();
    let root = dir.path();
    ok(
        root,
        &["train", "--config", "run.toml", "--data", "data", "--out", "model"],
    );
    for f in ["checkpoint.json", "loss_curve.csv", "leadtime.json", "manifest.json"] {
        assert!(root.join("model").join(f).is_file(), "{f}");
    }
    ok(
        root,
        &[
            "predict",
            "--config",
            "run.toml",
            "--data",
            "data",
            "--checkpoint",
            "model/checkpoint.json",
            "--out",
            "pred",
        ],
    );
    let mut samples: Vec<_> = fs::read_dir(root.join("pred/samples"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    samples.sort();
    assert_eq!(
        samples,
        (0..5).map(|k| format!("timelines_{k:03}.csv")).collect::<Vec<_>>()
    );
    for f in ["timelines.csv", "rollout.csv", "events.csv"] {
        assert!(root.join("pred").join(f).is_file(), "{f}");
    }
    ok(
        root,
        &["evaluate", "--data", "data", "--predictions", "pred", "--out", "eval"],
    );
}

#[test]
fn croston_predictions_evaluate_without_event_metrics() {
    let dir = workspace();
    let root = dir.path();
    ok(
        root,
        &["baseline", "--method", "croston", "--data", "data", "--out", "croston"],
    );
    assert!(!root.join("croston/events.csv").exists());
    ok(
        root,
        &[
            "evaluate",
            "--data",
            "data",
            "--predictions",
            "croston",
            "--out",
            "eval",
        ],
    );
    let csv = fs::read_to_string(root.join("eval/metrics.csv")).unwrap();
    assert_eq!(metric(&csv, "generalized_smace"), "NA");
}

#[test]
fn manifest_lists_outputs_with_sizes() {
    let dir = workspace();
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("data/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "synth");
    assert_eq!(manifest["seed"], 3);
    let outputs = manifest["outputs"].as_array().unwrap();
    assert!(!outputs.is_empty());
    for o in outputs {
        let path = dir.path().join("data").join(o["path"].as_str().unwrap());
        assert_eq!(fs::metadata(path).unwrap().len(), o["bytes"].as_u64().unwrap());
    }
}

#[test]
fn failures_emit_a_json_error_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = gsp(
        dir.path(),
        &[
            "evaluate",
            "--data",
            "missing",
            "--predictions",
            "missing",
            "--out",
            "eval",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    let record: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(record["error"]["kind"], "io");
    assert!(record["error"]["message"].as_str().unwrap().contains("missing"));

    fs::write(dir.path().join("bad.toml"), "unknown_key = 1\n").unwrap();
    let out = gsp(dir.path(), &["synth", "--config", "bad.toml", "--out", "data"]);
    assert_eq!(out.status.code(), Some(1));
    let record: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(record["error"]["kind"], "config");
}
