//! `simulate`: evaluation rollouts of the zero policy or a checkpoint.
//!
//! Writes `rollout_XXX.csv` per rollout, `summary.csv` with the ensemble
//! mean and 2σ band, and `costs.json` with per-rollout cost and final error.

use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::Serialize;
use stso_core::experiment::load_checkpoint;
use stso_core::optimizer::evaluate;
use stso_core::Policy;

use crate::output::{moments, write_json, write_summary, write_trajectory};
use crate::run::resolve_config;
use crate::{usage, ConfigArgs};

#[derive(Debug, Serialize)]
struct Costs {
    policy: String,
    noise: bool,
    costs: Vec<f64>,
    final_errors: Vec<f64>,
    mean_cost: f64,
    mean_final_error: f64,
}

pub fn cmd_simulate(args: &ConfigArgs, source: &str, rollouts: usize, noise: bool) -> Result<PathBuf> {
    if rollouts == 0 {
        return Err(usage("--rollouts must be at least 1"));
    }
    let ckpt = (source != "zero").then(|| Path::new(source));
    if let Some(c) = ckpt {
        if !c.join("state.json").is_file() {
            return Err(usage(format!("no checkpoint at {}", c.display())));
        }
    }
    let cfg = resolve_config(args, ckpt.map(|c| c.join("config.json")).as_deref())?;
    let system = cfg.build_system()?;
    let cost = cfg.cost.compile(system.grid(), system.channel_names().len())?;
    let (policy, design) = match ckpt {
        Some(c) => {
            let (state, _) = load_checkpoint(c)?;
            (state.policy, state.design)
        }
        None => (Policy::zeros(cfg.architecture()?)?, cfg.initial_state()?.design),
    };
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name).join("simulate"));
    std::fs::create_dir_all(&out)?;
    let ev = evaluate(system.as_ref(), &cost, &policy, &design, cfg.seed, rollouts, noise)?;
    for (r, t) in ev.trajectories.iter().enumerate() {
        write_trajectory(&out.join(format!("rollout_{r:03}.csv")), system.as_ref(), t)?;
    }
    write_summary(&out.join("summary.csv"), system.as_ref(), &moments(&ev.trajectories))?;
    let costs = Costs {
        policy: source.to_string(),
        noise,
        mean_cost: ev.mean_cost(),
        mean_final_error: ev.mean_final_error(),
        costs: ev.costs,
        final_errors: ev.final_errors,
    };
    write_json(&out.join("costs.json"), &costs)?;
    Ok(out)
}
