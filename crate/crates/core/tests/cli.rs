use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;
use std::time::Instant;

use lfgrasp::config::Config;
use lfgrasp::distributions::ScenePrior;
use lfgrasp::nets::load_checkpoint;
use lfgrasp::world::{Episode, ScenePose};
use serde_json::Value;
use tempfile::TempDir;

fn lfgrasp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lfgrasp")).args(args).env_remove("LFGRASP_CONFIG").output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = lfgrasp(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

/// A 5000-episode dataset and a success model trained on it, built once.
struct Fixture {
    dir: TempDir,
    data: PathBuf,
    success: PathBuf,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        let success = dir.path().join("success.ckpt");
        ok(&["--seed", "7", "gen-data", "--episodes", "5000", "--out", s(&data)]);
        ok(&["--seed", "8", "train", "--kind", "success", "--data", s(&data), "--out", s(&success)]);
        Fixture { dir, data, success }
    })
}

fn scene_file(dir: &Path) -> PathBuf {
    let object = ScenePrior::default().objects[0].instantiate(0, 1.0);
    let path = dir.join("scene.json");
    let body = serde_json::json!({ "object": object, "pose": ScenePose::default() });
    std::fs::write(&path, serde_json::to_vec(&body).unwrap()).unwrap();
    path
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(code(&lfgrasp(&["--help"])), 0);
    assert_eq!(code(&lfgrasp(&[])), 1);
    assert_eq!(code(&lfgrasp(&["gen-data"])), 1);
    assert_eq!(code(&lfgrasp(&["plan", "--strategy", "bogus", "--sample", "--out", "x.json"])), 1);
    assert_eq!(code(&lfgrasp(&["plan", "--strategy", "prior-sample", "--out", "x.json"])), 1);
}

#[test]
fn gen_data_writes_exactly_n_parseable_episodes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    ok(&["--seed", "3", "gen-data", "--episodes", "100", "--out", s(&out)]);
    let text = std::fs::read_to_string(out.join("episodes.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 100);
    for line in text.lines() {
        let e: Episode = serde_json::from_str(line).unwrap();
        let v: Value = serde_json::from_str(line).unwrap();
        for key in ["index", "seed", "hand", "object", "pose", "nuisances", "success", "failure"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        if e.success {
            let r = e.image.expect("successes carry an image");
            assert_eq!(std::fs::metadata(out.join(&r.file)).unwrap().len() as usize, 4 * r.width * r.height);
        }
    }
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["seed"], 3);
    assert_eq!(m["episodes"], 100);
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn gen_data_is_reproducible_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["--seed", "4", "--workers", "1", "gen-data", "--episodes", "500", "--out", s(&a)]);
    ok(&["--seed", "4", "--workers", "2", "gen-data", "--episodes", "500", "--out", s(&b)]);
    let read = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(read(&a, "episodes.jsonl"), read(&b, "episodes.jsonl"));
    assert_eq!(read(&a, "manifest.json"), read(&b, "manifest.json"));
}

#[test]
fn config_hash_tracks_every_field() {
    let base = Config::default();
    let h = base.hash();
    let mut variants = Vec::new();
    let mut c = base.clone();
    c.seed += 1;
    variants.push(c);
    let mut c = base.clone();
    c.hand_prior.x_high[2] = 0.35;
    variants.push(c);
    let mut c = base.clone();
    c.world.gripper.finger_length += 1e-9;
    variants.push(c);
    let mut c = base.clone();
    c.training.batch_size = 128;
    variants.push(c);
    let mut c = base.clone();
    c.planner.cg.max_iters = 21;
    variants.push(c);
    let mut c = base.clone();
    c.posterior.rotations = 10;
    variants.push(c);
    for v in &variants {
        assert_ne!(v.hash(), h);
    }
    assert_eq!(base.clone().hash(), h);
}

#[test]
fn config_file_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{ "seed": 42, "data": { "failure_keep": 1.0 } }"#).unwrap();
    let out = dir.path().join("d");
    let run = Command::new(env!("CARGO_BIN_EXE_lfgrasp"))
        .args(["gen-data", "--episodes", "20", "--out", s(&out)])
        .env("LFGRASP_CONFIG", &cfg)
        .output()
        .unwrap();
    assert!(run.status.success());
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["seed"], 42);
    assert_eq!(m["failure_keep"], 1.0);
    let mut expected = Config { seed: 42, ..Default::default() };
    expected.data.failure_keep = 1.0;
    assert_eq!(m["config_hash"], expected.hash());
}

#[test]
fn invalid_configs_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    for (name, body, why) in [
        ("keep.json", r#"{ "data": { "failure_keep": 2.0 } }"#, "failure_keep"),
        ("unknown.json", r#"{ "sede": 1 }"#, "unknown field"),
        (
            "box.json",
            r#"{ "hand_prior": { "x_low": [0.2, -0.15, 0.12], "x_high": [0.15, 0.15, 0.34], "rotation": { "modes": [[1.0, 0.0, 0.0, 0.0]], "kappa": 30.0 }, "grasp_probs": [0.5, 0.25, 0.25] } }"#,
            "position limits",
        ),
    ] {
        let cfg = dir.path().join(name);
        std::fs::write(&cfg, body).unwrap();
        let r = lfgrasp(&["--config", s(&cfg), "gen-data", "--episodes", "10", "--out", s(&out)]);
        let err = String::from_utf8_lossy(&r.stderr);
        assert_eq!(code(&r), 2, "{name}: {err}");
        assert!(err.contains(why), "{name}: {err}");
    }
    assert!(!out.exists());
}

#[test]
fn success_training_beats_chance_and_reports() {
    let f = fixture();
    let report = json(&f.success.with_extension("ckpt.report.json"));
    for key in [
        "config_hash",
        "data_config_hash",
        "kind",
        "seed",
        "n_train",
        "n_heldout",
        "epochs",
        "best_epoch",
        "best_heldout_loss",
        "stopped_early",
        "calibration",
        "wall_time_s",
    ] {
        assert!(report.get(key).is_some(), "report lacks {key}");
    }
    assert_eq!(report["kind"], "success");
    let bce = report["best_heldout_loss"].as_f64().unwrap();
    assert!(bce < std::f64::consts::LN_2, "held-out BCE {bce}");
    let epochs = report["epochs"].as_array().unwrap();
    assert!(!epochs.is_empty());
    for e in epochs {
        assert!(e["train_loss"].as_f64().unwrap().is_finite() && e["heldout_loss"].as_f64().unwrap().is_finite());
    }
    let ckpt = load_checkpoint(&f.success).unwrap();
    assert_eq!(ckpt.meta["config_hash"], report["config_hash"]);
    let manifest = json(&f.data.join("manifest.json"));
    assert_eq!(report["data_config_hash"], manifest["config_hash"]);
}

#[test]
fn image_training_without_positives_writes_nothing() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("failures");
    std::fs::create_dir_all(&data).unwrap();
    let text = std::fs::read_to_string(f.data.join("episodes.jsonl")).unwrap();
    let failures: String = text.lines().filter(|l| l.contains("\"success\":false")).map(|l| format!("{l}\n")).collect();
    assert!(!failures.is_empty());
    std::fs::write(data.join("episodes.jsonl"), failures).unwrap();
    let ckpt = dir.path().join("image.ckpt");
    let r = lfgrasp(&["train", "--kind", "image", "--data", s(&data), "--out", s(&ckpt)]);
    assert_eq!(code(&r), 2);
    assert!(String::from_utf8_lossy(&r.stderr).contains("successful episodes"));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1, "only the dataset directory remains");
}

#[test]
fn prior_sample_plans_without_models() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("plan.json");
    ok(&["plan", "--strategy", "prior-sample", "--sample", "--out", s(&out)]);
    let p = json(&out);
    assert_eq!(p["strategy"], "prior-sample");
    assert_eq!(p["config_hash"], Config::default().hash());
    let q = &p["hand"]["q"];
    let n: f64 = ["w", "x", "y", "z"].iter().map(|k| q[k].as_f64().unwrap().powi(2)).sum();
    assert!((n.sqrt() - 1.0).abs() < 1e-9);
}

#[test]
fn metric_map_plan_reports_terms_and_trace() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let scene = scene_file(dir.path());
    let out = dir.path().join("plan.json");
    ok(&[
        "--seed",
        "5",
        "plan",
        "--strategy",
        "metric-map",
        "--scene",
        s(&scene),
        "--success",
        s(&f.success),
        "--out",
        s(&out),
    ]);
    let p = json(&out);
    let q = &p["hand"]["q"];
    let n: f64 = ["w", "x", "y", "z"].iter().map(|k| q[k].as_f64().unwrap().powi(2)).sum();
    assert!((n.sqrt() - 1.0).abs() < 1e-9);
    assert!(p["hand"]["x"].as_array().unwrap().len() == 3 && p["hand"]["g"].is_string());
    let t = &p["terms"];
    let total = t["success"].as_f64().unwrap() + t["prior"].as_f64().unwrap();
    assert!((total - t["total"].as_f64().unwrap()).abs() < 1e-9);
    assert!(t["conditioning"].is_null());
    let runs = p["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 3);
    for r in runs {
        let steps = r["trace"]["steps"].as_array().unwrap();
        assert!(!steps.is_empty() && steps.len() <= 20);
    }
    assert!(p["wall_time_s"].as_f64().unwrap() <= 10.0);
    let missing = lfgrasp(&[
        "plan",
        "--strategy",
        "image-map",
        "--scene",
        s(&scene),
        "--success",
        s(&f.success),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&missing), 2);
}

#[test]
fn eval_writes_a_benchmark_result() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eval.json");
    ok(&["--seed", "2", "eval", "--strategy", "prior-sample", "--trials", "500", "--out", s(&out)]);
    let r = json(&out);
    for key in [
        "config_hash",
        "strategy",
        "seed",
        "n_trials",
        "successes",
        "rate",
        "interval",
        "planning_failures",
        "per_object",
        "mean_planning_time_s",
        "wall_time_s",
    ] {
        assert!(r.get(key).is_some(), "result lacks {key}");
    }
    assert_eq!(r["n_trials"], 500);
    let (lo, hi, rate) =
        (r["interval"]["low"].as_f64().unwrap(), r["interval"]["high"].as_f64().unwrap(), r["rate"].as_f64().unwrap());
    assert!(lo <= rate && rate <= hi);
    let zero =
        lfgrasp(&["eval", "--strategy", "prior-sample", "--trials", "0", "--out", s(&dir.path().join("z.json"))]);
    assert_eq!(code(&zero), 2);
    assert!(!dir.path().join("z.json").exists());
}

#[test]
fn export_posterior_writes_three_csvs() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let scene = scene_file(dir.path());
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{ "posterior": { "cells": [8, 8, 6], "position_mc": 32, "rotations": 100, "marginal_mc": 32 } }"#,
    )
    .unwrap();
    let out = dir.path().join("post");
    ok(&["--config", s(&cfg), "export-posterior", "--scene", s(&scene), "--success", s(&f.success), "--out", s(&out)]);
    let header = |name: &str| std::fs::read_to_string(out.join(name)).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header("positions.csv"), "x,y,z,density");
    assert_eq!(header("rotations.csv"), "w,x,y,z,density");
    assert_eq!(header("grasp.csv"), "type,prob");
    let summary = json(&out.join("posterior.json"));
    assert_eq!(summary["meta"]["config_hash"].as_str().unwrap().len(), 64);
    let g = &summary["grasp"];
    let sum: f64 = ["basic", "wide", "pinch"].iter().map(|k| g[k].as_f64().unwrap()).sum();
    assert!((sum - 1.0).abs() < 1e-9);
}

#[test]
fn smoke_pipeline_finishes_quickly() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let data = dir.path().join("data");
    let ckpt = dir.path().join("s.ckpt");
    let out = dir.path().join("eval.json");
    ok(&["--seed", "21", "gen-data", "--episodes", "2000", "--out", s(&data)]);
    ok(&["--seed", "22", "train", "--kind", "success", "--data", s(&data), "--out", s(&ckpt)]);
    ok(&[
        "--seed",
        "23",
        "eval",
        "--strategy",
        "metric-map",
        "--trials",
        "200",
        "--success",
        s(&ckpt),
        "--out",
        s(&out),
    ]);
    let secs = start.elapsed().as_secs_f64();
    let r = json(&out);
    eprintln!("smoke pipeline {secs:.1}s, metric-map {}/200", r["successes"]);
    assert!(secs <= 600.0);
    assert!(r["rate"].as_f64().unwrap() > 0.10);
    let _ = &fixture().dir;
}
