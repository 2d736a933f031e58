//! `run`: train, report, checkpoint, and write the final bundle.
//!
//! Run directory layout:
//! - `config.json`: the resolved config;
//! - `manifest.json`: provenance tag of every config field;
//! - `report.jsonl`: one record per iteration;
//! - `timing.jsonl`: wall time per iteration (kept apart so the report is
//!   reproducible byte for byte);
//! - `checkpoints/ckpt_XXXX/`: checkpoint plus `config.json` and the report
//!   prefix up to that iteration;
//! - `final/`: evaluation rollouts of the trained and the zero policy.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use stso_core::experiment::{checkpoint_dir, load_checkpoint, save_checkpoint, ExperimentConfig};
use stso_core::optimizer::{evaluate, IterationRecord, Trainer, TrainerState};
use stso_core::{Policy, StsoError};

use crate::output::{moments, write_ensemble, write_json, write_trajectory};
use crate::{usage, ConfigArgs};

pub const REPORT: &str = "report.jsonl";
pub const TIMING: &str = "timing.jsonl";

/// Resolve the config from `--config`, falling back to `fallback`.
pub fn resolve_config(args: &ConfigArgs, fallback: Option<&Path>) -> Result<ExperimentConfig> {
    let path = match (&args.config, fallback) {
        (Some(p), _) => p.clone(),
        (None, Some(f)) => f.to_path_buf(),
        (None, None) => return Err(usage("--config is required")),
    };
    Ok(ExperimentConfig::load(&path, &args.all_overrides())?)
}

pub fn run_dir(args: &ConfigArgs, cfg: &ExperimentConfig, resume: Option<&Path>) -> PathBuf {
    if let Some(out) = &args.out {
        return out.clone();
    }
    if let Some(ckpt) = resume {
        if let Some(parent) = ckpt.parent().filter(|p| p.file_name().is_some_and(|n| n == "checkpoints")) {
            if let Some(run) = parent.parent() {
                return run.to_path_buf();
            }
        }
    }
    match &cfg.output.dir {
        Some(d) => PathBuf::from(d),
        None => PathBuf::from("runs").join(&cfg.name),
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    name: &'a str,
    fields: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize)]
struct ManifestEntry {
    path: String,
    source: &'static str,
}

#[derive(Debug, Serialize)]
struct TimingLine {
    iteration: u64,
    wall_seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct FinalSummary {
    pub iterations: u64,
    pub evaluation_rollouts: usize,
    pub controlled_mean_cost: f64,
    pub uncontrolled_mean_cost: f64,
    pub controlled_mean_final_error: f64,
    pub uncontrolled_mean_final_error: f64,
    pub positions: Vec<Vec<f64>>,
    pub widths: Vec<f64>,
}

pub struct RunOutcome {
    pub dir: PathBuf,
    pub summary: FinalSummary,
}

fn keep_lines(path: &Path, keep: impl Fn(&str) -> bool) -> Result<Vec<String>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let f = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in f.lines() {
        let line = line?;
        if keep(&line) {
            out.push(line);
        }
    }
    Ok(out)
}

fn write_lines(path: &Path, lines: &[String]) -> Result<File> {
    let mut f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    for l in lines {
        writeln!(f, "{l}")?;
    }
    Ok(f)
}

fn iteration_of(line: &str) -> Option<u64> {
    serde_json::from_str::<serde_json::Value>(line).ok()?.get("iteration")?.as_u64()
}

fn write_checkpoint(run: &Path, cfg: &ExperimentConfig, state: &TrainerState) -> Result<()> {
    let dir = checkpoint_dir(run, state.iteration);
    save_checkpoint(&dir, state, cfg.seed)?;
    write_json(&dir.join("config.json"), cfg)?;
    fs::copy(run.join(REPORT), dir.join(REPORT))?;
    Ok(())
}

pub fn cmd_run(args: &ConfigArgs, resume: Option<&Path>) -> Result<RunOutcome> {
    let fallback = resume.map(|r| r.join("config.json"));
    let cfg = resolve_config(args, fallback.as_deref())?;
    let dir = run_dir(args, &cfg, resume);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    write_json(&dir.join("config.json"), &cfg)?;
    let tags = cfg.provenance(&args.all_overrides())?;
    let manifest = Manifest {
        name: &cfg.name,
        fields: tags.into_iter().map(|(path, source)| ManifestEntry { path, source }).collect(),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;

    let system = cfg.build_system()?;
    let cost = cfg.cost.compile(system.grid(), system.channel_names().len())?;
    let (state, report_prefix, timing_prefix) = match resume {
        Some(ckpt) => {
            let (state, seed) = load_checkpoint(ckpt)?;
            if seed != cfg.seed {
                return Err(StsoError::config("seed", format!("checkpoint was trained with seed {seed}, config has {}", cfg.seed)).into());
            }
            if state.iteration > cfg.optimizer.iterations {
                return Err(StsoError::config(
                    "optimizer.iterations",
                    format!("checkpoint is at iteration {}, past the configured total", state.iteration),
                )
                .into());
            }
            let done = state.iteration;
            let report = keep_lines(&ckpt.join(REPORT), |_| true)?;
            if report.len() as u64 != done {
                anyhow::bail!("checkpoint report has {} lines, expected {done}", report.len());
            }
            let timing = keep_lines(&dir.join(TIMING), |l| iteration_of(l).is_some_and(|i| i <= done))?;
            (state, report, timing)
        }
        None => (cfg.initial_state()?, Vec::new(), Vec::new()),
    };
    let mut report = write_lines(&dir.join(REPORT), &report_prefix)?;
    let mut timing = write_lines(&dir.join(TIMING), &timing_prefix)?;

    let mut trainer = Trainer::new(system.as_ref(), &cost, cfg.train_config(), state)?;
    let total = cfg.optimizer.iterations;
    let every = cfg.output.checkpoint_every;
    let progress = (total / 20).max(1);
    let mut clock = Instant::now();
    let result = trainer.run(|rec: &IterationRecord, st: &TrainerState| {
        let io = |e: std::io::Error| StsoError::Io(e);
        writeln!(report, "{}", serde_json::to_string(rec)?).map_err(io)?;
        report.flush().map_err(io)?;
        let line = TimingLine { iteration: rec.iteration, wall_seconds: clock.elapsed().as_secs_f64() };
        writeln!(timing, "{}", serde_json::to_string(&line)?).map_err(io)?;
        clock = Instant::now();
        if rec.iteration % progress == 0 || rec.iteration == total {
            eprintln!(
                "iteration {}/{total}: loss {:.6e}, mean cost {:.6e}, diverged {}",
                rec.iteration, rec.loss, rec.mean_cost, rec.diverged
            );
        }
        if every > 0 && rec.iteration % every == 0 && rec.iteration != total {
            write_checkpoint(&dir, &cfg, st).map_err(|e| StsoError::InvalidArgument(format!("{e:#}")))?;
        }
        Ok(())
    });
    report.flush()?;
    if let Err(e) = result {
        return Err(anyhow::Error::new(e).context(format!("run in {} stopped", dir.display())));
    }
    let state = trainer.into_state();
    write_checkpoint(&dir, &cfg, &state)?;

    let summary = final_bundle(&dir.join("final"), &cfg, system.as_ref(), &cost, &state)?;
    Ok(RunOutcome { dir, summary })
}

fn final_bundle(
    dir: &Path,
    cfg: &ExperimentConfig,
    system: &dyn stso_core::Dynamics,
    cost: &stso_core::optimizer::CompiledCost,
    state: &TrainerState,
) -> Result<FinalSummary> {
    fs::create_dir_all(dir)?;
    let n = cfg.output.evaluation_rollouts;
    let zero = Policy::zeros(state.policy.architecture().clone())?;
    let controlled = evaluate(system, cost, &state.policy, &state.design, cfg.seed, n, true)?;
    let uncontrolled = evaluate(system, cost, &zero, &state.design, cfg.seed, n, true)?;
    let clean = evaluate(system, cost, &state.policy, &state.design, cfg.seed, 1, false)?;
    write_trajectory(&dir.join("trajectory_noise.csv"), system, &controlled.trajectories[0])?;
    write_trajectory(&dir.join("trajectory_clean.csv"), system, &clean.trajectories[0])?;
    write_ensemble(
        &dir.join("ensemble.csv"),
        system,
        &moments(&controlled.trajectories),
        &moments(&uncontrolled.trajectories),
    )?;
    let summary = FinalSummary {
        iterations: state.iteration,
        evaluation_rollouts: n,
        controlled_mean_cost: controlled.mean_cost(),
        uncontrolled_mean_cost: uncontrolled.mean_cost(),
        controlled_mean_final_error: controlled.mean_final_error(),
        uncontrolled_mean_final_error: uncontrolled.mean_final_error(),
        positions: state.design.positions_for_report(system.grid().dim()),
        widths: state.design.widths.clone(),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Parse the report of a run directory.
pub fn read_report(dir: &Path) -> Result<Vec<IterationRecord>> {
    let f = OpenOptions::new().read(true).open(dir.join(REPORT))?;
    BufReader::new(f)
        .lines()
        .map(|l| Ok(serde_json::from_str(&l?)?))
        .collect()
}
