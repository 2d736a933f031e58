use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use stso_core::ExperimentConfig;

fn stso(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stso")).args(args).output().unwrap()
}

fn stso_threads(threads: usize, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stso")).env("RAYON_NUM_THREADS", threads.to_string()).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// A run small enough to finish in well under a second.
const TINY: &str = r#"{
  "name": "tiny",
  "system": { "kind": "heat1d", "points": 6, "horizon": 0.03 },
  "policy": { "network": { "kind": "mlp", "hidden": [3] } },
  "actuators": { "count": 2 },
  "optimizer": { "iterations": 4, "rollouts": 3, "gradient_mode": "on_policy" },
  "output": { "checkpoint_every": 2, "evaluation_rollouts": 2 },
  "seed": 5
}"#;

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn missing_system_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{ "name": "x" }"#);
    let o = stso(&["run", "--config", &cfg, "--out", p(&dir.path().join("run"))]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("`system`"), "{}", stderr(&o));
}

#[test]
fn unknown_key_is_a_config_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{ "name": "x", "system": { "kind": "heat1d", "colour": 3 } }"#);
    let o = stso(&["run", "--config", &cfg]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("system.colour"), "{}", stderr(&o));
}

#[test]
fn bad_override_and_missing_config_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", TINY);
    let o = stso(&["run", "--config", &cfg, "--override", "R=-4"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert_eq!(code(&stso(&["run"])), 2);
    assert_eq!(code(&stso(&["frobnicate"])), 2);
    assert_eq!(code(&stso(&["--help"])), 0);
}

#[test]
fn zero_rollouts_rejected_by_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", TINY);
    let o = stso(&["simulate", "--config", &cfg, "--rollouts", "0", "--out", p(dir.path())]);
    assert_eq!(code(&o), 2);
}

#[test]
fn diverging_run_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{ "name": "boom", "system": { "kind": "burgers1d", "points": 32, "boundary_value": 1e9 } }"#);
    let o = stso(&["run", "--config", &cfg, "--override", "K=2", "R=2", "--out", p(&dir.path().join("run"))]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("aborted"), "{}", stderr(&o));
}

#[test]
fn report_is_bitwise_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", TINY);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(code(&stso_threads(1, &["run", "--config", &cfg, "--out", p(&a)])), 0);
    assert_eq!(code(&stso_threads(4, &["run", "--config", &cfg, "--out", p(&b)])), 0);
    let ra = std::fs::read(a.join("report.jsonl")).unwrap();
    assert_eq!(ra, std::fs::read(b.join("report.jsonl")).unwrap());
    assert_eq!(ra.iter().filter(|c| **c == b'\n').count(), 4);
    let c = dir.path().join("c");
    assert_eq!(code(&stso(&["run", "--config", &cfg, "--seed", "6", "--out", p(&c)])), 0);
    assert_ne!(ra, std::fs::read(c.join("report.jsonl")).unwrap());
}

#[test]
fn resume_reproduces_the_uninterrupted_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", TINY);
    let full = dir.path().join("full");
    assert_eq!(code(&stso(&["run", "--config", &cfg, "--out", p(&full)])), 0);
    assert!(full.join("checkpoints/ckpt_0002/state.json").is_file());
    assert!(full.join("checkpoints/ckpt_0004/state.json").is_file());

    let resumed = dir.path().join("resumed");
    let o = stso(&["run", "--resume", p(&full.join("checkpoints/ckpt_0002")), "--out", p(&resumed)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(std::fs::read(full.join("report.jsonl")).unwrap(), std::fs::read(resumed.join("report.jsonl")).unwrap());
    assert_eq!(
        std::fs::read(full.join("checkpoints/ckpt_0004/policy.bin")).unwrap(),
        std::fs::read(resumed.join("checkpoints/ckpt_0004/policy.bin")).unwrap()
    );

    // A short run extended from its final checkpoint.
    let short = dir.path().join("short");
    assert_eq!(code(&stso(&["run", "--config", &cfg, "--override", "K=2", "--out", p(&short)])), 0);
    let o = stso(&["run", "--config", &cfg, "--resume", p(&short.join("checkpoints/ckpt_0002")), "--out", p(&short)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(std::fs::read(full.join("report.jsonl")).unwrap(), std::fs::read(short.join("report.jsonl")).unwrap());

    let o = stso(&["run", "--config", &cfg, "--seed", "9", "--resume", p(&full.join("checkpoints/ckpt_0002")), "--out", p(&resumed)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn run_directory_layout_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", TINY);
    let run = dir.path().join("run");
    assert_eq!(code(&stso(&["run", "--config", &cfg, "--override", "R=2", "--out", p(&run)])), 0);
    for f in ["config.json", "manifest.json", "report.jsonl", "timing.jsonl", "final/summary.json", "final/ensemble.csv"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(run.join("manifest.json")).unwrap()).unwrap();
    let tag = |path: &str| {
        manifest["fields"].as_array().unwrap().iter().find(|f| f["path"] == path).unwrap()["source"].as_str().unwrap().to_string()
    };
    assert_eq!(tag("optimizer.rollouts"), "override");
    assert_eq!(tag("system.dt"), "artifact-default");
    let resolved = ExperimentConfig::load(&run.join("config.json"), &[]).unwrap();
    assert_eq!(resolved.optimizer.rollouts, 2);
}

#[test]
fn simulate_zero_and_checkpoint_policies() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", TINY);
    let run = dir.path().join("run");
    assert_eq!(code(&stso(&["run", "--config", &cfg, "--out", p(&run)])), 0);
    let zero = dir.path().join("zero");
    assert_eq!(code(&stso(&["simulate", "--config", &cfg, "--rollouts", "3", "--out", p(&zero)])), 0);
    for f in ["rollout_000.csv", "rollout_002.csv", "summary.csv", "costs.json"] {
        assert!(zero.join(f).is_file(), "{f}");
    }
    let trained = dir.path().join("trained");
    let ckpt = run.join("checkpoints/ckpt_0004");
    let o = stso(&["simulate", "--policy", p(&ckpt), "--rollouts", "2", "--no-noise", "--out", p(&trained)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let costs: serde_json::Value = serde_json::from_slice(&std::fs::read(trained.join("costs.json")).unwrap()).unwrap();
    // Without noise both rollouts are the same deterministic trajectory.
    assert_eq!(costs["costs"][0], costs["costs"][1]);
    let o = stso(&["simulate", "--policy", p(&dir.path().join("nope")), "--out", p(&trained)]);
    assert_eq!(code(&o), 2);
}

fn lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path).unwrap().lines().map(str::to_string).collect()
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

#[test]
fn exports_match_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", TINY);
    let run = dir.path().join("run");
    assert_eq!(code(&stso(&["run", "--config", &cfg, "--out", p(&run)])), 0);
    for kind in ["convergence", "contour", "final_snapshot"] {
        let out = dir.path().join(format!("{kind}.csv"));
        let o = stso(&["export", p(&run), "--kind", kind, "--out", p(&out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert_eq!(lines(&out), lines(&golden(&format!("{kind}.csv"))), "{kind}");
    }
    let o = stso(&["export", p(&run), "--kind", "contour", "--source", "clean"]);
    assert_eq!(code(&o), 0);
    assert_eq!(lines(&run.join("export/contour.csv"))[0], "t,x,channel,value");
    assert_eq!(code(&stso(&["export", p(&dir.path().join("missing")), "--kind", "convergence"])), 2);
}

#[test]
fn convergence_has_one_row_per_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", TINY);
    let run = dir.path().join("run");
    assert_eq!(code(&stso(&["run", "--config", &cfg, "--override", "K=7", "--out", p(&run)])), 0);
    assert_eq!(code(&stso(&["export", p(&run), "--kind", "convergence"])), 0);
    let rows = lines(&run.join("export/convergence.csv"));
    assert_eq!(rows[0], "iteration,loss,mean_cost,mean_final_error");
    assert_eq!(rows.len(), 1 + 7);
}

#[test]
fn heat2d_contour_has_625_nodes_per_slice() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let cfg = configs_dir().join("heat2d.json");
    let o = stso(&[
        "run", "--config", p(&cfg), "--override", "K=1", "R=2", "T=0.03", "output.evaluation_rollouts=2", "--out", p(&run),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(code(&stso(&["export", p(&run), "--kind", "contour"])), 0);
    let rows = lines(&run.join("export/contour.csv"));
    assert_eq!(rows[0], "t,x,y,channel,value");
    let first_t = rows.iter().skip(1).filter(|r| r.starts_with("0,")).count();
    assert_eq!(first_t, 625);
    assert_eq!(rows.len() - 1, 625 * 4);
}

#[test]
fn beam_final_snapshot_has_two_channels() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let cfg = configs_dir().join("euler_bernoulli_desk.json");
    let o = stso(&["run", "--config", p(&cfg), "--override", "K=1", "R=2", "T=0.005", "output.evaluation_rollouts=2", "--out", p(&run)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(code(&stso(&["export", p(&run), "--kind", "final_snapshot"])), 0);
    let rows = lines(&run.join("export/final_snapshot.csv"));
    assert_eq!(rows[0], "x,channel,controlled_mean,controlled_std,uncontrolled_mean,uncontrolled_std");
    let mut channels: Vec<&str> = rows[1..].iter().map(|r| r.split(',').nth(1).unwrap()).collect();
    channels.dedup();
    assert_eq!(channels.len(), 2, "{channels:?}");
}

#[test]
fn shipped_configs_load() {
    let dir = configs_dir();
    let heat = ExperimentConfig::load(&dir.join("heat1d.json"), &[]).unwrap();
    assert_eq!(heat.system.points, 64);
    assert_eq!(heat.system.horizon, 1.0);
    assert_eq!(heat.optimizer.iterations, 3000);
    assert_eq!(heat.optimizer.rollouts, 200);
    let nagumo = ExperimentConfig::load(&dir.join("nagumo.json"), &[]).unwrap();
    assert_eq!(nagumo.system.horizon, 3.5);
    assert_eq!(nagumo.optimizer.iterations, 2000);
    assert_eq!(nagumo.system.alpha, -0.5);
    let h2 = ExperimentConfig::load(&dir.join("heat2d.json"), &[]).unwrap();
    assert_eq!((h2.system.points, h2.actuators.count, h2.optimizer.iterations, h2.optimizer.rollouts), (25, 5, 5000, 100));
    let limb = ExperimentConfig::load(&dir.join("softlimb.json"), &[]).unwrap();
    assert_eq!((limb.system.points, limb.system.points_y, limb.actuators.count), (9, Some(3), 10));
    assert_eq!((limb.optimizer.iterations, limb.optimizer.rollouts, limb.system.gravity_scale), (4000, 50, 100.0));
    let beam = ExperimentConfig::load(&dir.join("euler_bernoulli.json"), &[]).unwrap();
    assert_eq!(beam.build_system().unwrap().grid().node_count() * 2, 64);
    let desk = ExperimentConfig::load(&dir.join("heat1d.json"), &["K=200".into(), "R=50".into(), "J=32".into(), "seed=7".into()]).unwrap();
    assert_eq!((desk.optimizer.iterations, desk.optimizer.rollouts, desk.system.points, desk.seed), (200, 50, 32, 7));
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ExperimentConfig::load(&path, &[]).unwrap();
        cfg.build_system().unwrap();
        cfg.initial_state().unwrap();
    }
}
