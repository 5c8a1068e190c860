use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use iajepa::analyzer::ols_r2;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_iajepa"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

const SMALL: &str = r#"{
  "data": {"clips": 20},
  "stage": {"steps": 2, "batch": 2, "precision": "f64"},
  "probe": {"epochs": 5, "reasoner_epochs": 1},
  "analysis": {"rollout_clips": 2}
}"#;

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.json"), SMALL).unwrap();
    dir
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let mut full = vec!["--config", "cfg.json"];
    full.extend_from_slice(args);
    let o = run(dir, &full);
    assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

#[test]
fn config_init_prints_parseable_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["config", "init"]);
    assert_eq!(code(&o), 0);
    let cfg: iajepa::cli::RunConfig = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(cfg, iajepa::cli::RunConfig::default());
}

#[test]
fn usage_and_config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["gen-data", "--bogus"])), 1);
    assert_eq!(code(&run(dir.path(), &["frobnicate"])), 1);
    assert_eq!(code(&run(dir.path(), &["--config", "missing.json", "gen-data"])), 1);
    std::fs::write(dir.path().join("bad.json"), "{ not json").unwrap();
    assert_eq!(code(&run(dir.path(), &["--config", "bad.json", "gen-data"])), 1);
    assert_eq!(code(&run(dir.path(), &["pretrain", "--variant", "nope", "--data", "x"])), 1);
    assert_eq!(code(&run(dir.path(), &["--help"])), 0);
}

#[test]
fn selfcheck_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["selfcheck", "--cases", "2"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("max finite-difference error"));
    assert_eq!(code(&run(dir.path(), &["selfcheck", "--cases", "2", "--tolerance", "0"])), 2);
}

fn pipeline(dir: &Path) {
    ok(dir, &["gen-data", "--out", "data"]);
    ok(dir, &["pretrain", "--variant", "ia", "--data", "data", "--out", "ia"]);
    ok(dir, &["extract", "--checkpoint", "ia/checkpoint.iajc", "--data", "data", "--out", "ia"]);
}

#[test]
fn pretrain_then_probe_reports_accuracy() {
    let w = workspace();
    let dir = w.path();
    pipeline(dir);
    for stage in ["stage1-patch", "stage2-object", "stage3-ia"] {
        assert!(dir.join(format!("ia/{stage}.iajc")).exists());
    }
    ok(dir, &["probe", "--task", "collision", "--bank", "ia/features.iajf", "--data", "data", "--out", "ia"]);
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("ia/probe-collision.json")).unwrap()).unwrap();
    assert!(m["accuracy"].as_f64().is_some());
    assert!(m["config_digest"].as_str().is_some());

    // a different seed is a different configuration
    let o = run(
        dir,
        &["--config", "cfg.json", "--seed", "3", "probe", "--task", "collision", "--bank", "ia/features.iajf", "--data", "data"],
    );
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("digest"));
}

fn read_linearity(path: &Path) -> (Vec<f64>, Vec<f64>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for rec in r.deserialize::<std::collections::HashMap<String, String>>() {
        let rec = rec.unwrap();
        x.push(rec["motion_energy"].parse().unwrap());
        y.push(rec["dispersion"].parse().unwrap());
    }
    (x, y)
}

#[test]
fn linearity_outputs_match_the_fit() {
    let w = workspace();
    let dir = w.path();
    pipeline(dir);
    ok(
        dir,
        &["analyze", "--bank", "ia/features.iajf", "--data", "data", "--checkpoint", "ia/checkpoint.iajc", "--linearity", "--rollout", "--dispersion", "--out", "an"],
    );
    let (x, y) = read_linearity(&dir.join("an/linearity.csv"));
    assert_eq!(x.len(), 20);
    let fit = ols_r2(&x, &y).unwrap();
    let saved: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("an/linearity.json")).unwrap()).unwrap();
    assert_eq!(saved["slope"].as_f64().unwrap(), fit.slope);
    assert_eq!(saved["intercept"].as_f64().unwrap(), fit.intercept);
    assert_eq!(saved["r2"].as_f64().unwrap(), fit.r2);
    let svg = std::fs::read_to_string(dir.join("an/linearity.svg")).unwrap();
    assert_eq!(svg.matches("<circle").count(), 20);
    assert!(svg.contains(&format!("data-r2=\"{}\"", fit.r2)));
    let rollout = std::fs::read_to_string(dir.join("an/rollout.csv")).unwrap();
    assert_eq!(rollout.lines().count(), 1 + 5);
}

#[test]
fn viz_mask_writes_its_artifacts() {
    let w = workspace();
    let dir = w.path();
    ok(dir, &["gen-data", "--out", "data"]);
    let out = ok(dir, &["viz-mask", "--data", "data", "--clip", "3", "--strategy", "ia", "--zero-region", "0,0,48,96", "--out", "viz"]);
    assert!(out.contains("116 of 288"));
    for f in ["mask.json", "mask.svg", "saliency.pgm"] {
        assert!(dir.join("viz").join(f).exists(), "{f}");
    }
    let o = run(dir, &["--config", "cfg.json", "viz-mask", "--data", "data", "--strategy", "ia", "--zero-region", "5,5"]);
    assert_eq!(code(&o), 1);
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out: Vec<(PathBuf, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            let bytes = std::fs::read(&p).unwrap();
            (p.file_name().unwrap().into(), bytes)
        })
        .collect();
    out.sort();
    out
}

#[test]
fn identical_commands_reproduce_identical_bytes() {
    let a = workspace();
    let b = workspace();
    pipeline(a.path());
    ok(b.path(), &["--workers", "1", "gen-data", "--out", "data"]);
    ok(b.path(), &["--workers", "1", "pretrain", "--variant", "ia", "--data", "data", "--out", "ia"]);
    ok(b.path(), &["--workers", "1", "extract", "--checkpoint", "ia/checkpoint.iajc", "--data", "data", "--out", "ia"]);
    assert_eq!(tree(&a.path().join("data")), tree(&b.path().join("data")));
    assert_eq!(tree(&a.path().join("ia")), tree(&b.path().join("ia")));
}
