//! Long-format CSV for trajectories and ensemble statistics.
//!
//! Every file starts with the time and coordinate columns `t,x` (1D) or
//! `t,x,y` (2D), followed by `channel` and the value columns. Rows are
//! ordered by time, then channel, then node (x fastest).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use stso_core::{Dynamics, Grid, Trajectory};

pub fn coord_columns(dim: usize) -> &'static [&'static str] {
    if dim == 1 {
        &["x"]
    } else {
        &["x", "y"]
    }
}

pub fn num(v: f64) -> String {
    format!("{v}")
}

fn coords(grid: &Grid, node: usize) -> Vec<String> {
    let c = grid.coordinate(node);
    c[..grid.dim()].iter().map(|v| num(*v)).collect()
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

fn header(dim: usize, values: &[&str]) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend(coord_columns(dim).iter().map(|s| s.to_string()));
    h.push("channel".into());
    h.extend(values.iter().map(|s| s.to_string()));
    h
}

/// `t,x[,y],channel,value` for every state of one trajectory.
pub fn write_trajectory(path: &Path, system: &dyn Dynamics, traj: &Trajectory) -> Result<()> {
    let grid = system.grid();
    let names = system.channel_names();
    let dt = system.config().dt;
    let mut w = writer(path)?;
    w.write_record(header(grid.dim(), &["value"]))?;
    for (step, state) in traj.states.iter().enumerate() {
        let t = num(step as f64 * dt);
        for (c, name) in names.iter().enumerate() {
            let values = state.component(c).values();
            for (node, v) in values.iter().enumerate() {
                let mut row = vec![t.clone()];
                row.extend(coords(grid, node));
                row.push(name.to_string());
                row.push(num(*v));
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Mean and sample standard deviation over an ensemble, indexed as
/// `[step][channel][node]`.
pub struct Moments {
    pub mean: Vec<Vec<Vec<f64>>>,
    pub std: Vec<Vec<Vec<f64>>>,
}

pub fn moments(trajs: &[Trajectory]) -> Moments {
    let first = &trajs[0];
    let steps = first.states.len();
    let channels = first.states[0].len();
    let nodes = first.states[0].grid().node_count();
    let n = trajs.len() as f64;
    let mut mean = vec![vec![vec![0.0; nodes]; channels]; steps];
    let mut std = mean.clone();
    for s in 0..steps {
        for c in 0..channels {
            for node in 0..nodes {
                let m = trajs.iter().map(|t| t.states[s].component(c).values()[node]).sum::<f64>() / n;
                let var = if trajs.len() > 1 {
                    trajs.iter().map(|t| (t.states[s].component(c).values()[node] - m).powi(2)).sum::<f64>() / (n - 1.0)
                } else {
                    0.0
                };
                mean[s][c][node] = m;
                std[s][c][node] = var.sqrt();
            }
        }
    }
    Moments { mean, std }
}

/// `t,x[,y],channel,mean,two_sigma`.
pub fn write_summary(path: &Path, system: &dyn Dynamics, m: &Moments) -> Result<()> {
    let grid = system.grid();
    let dt = system.config().dt;
    let mut w = writer(path)?;
    w.write_record(header(grid.dim(), &["mean", "two_sigma"]))?;
    for (s, per_channel) in m.mean.iter().enumerate() {
        for (c, name) in system.channel_names().iter().enumerate() {
            for node in 0..grid.node_count() {
                let mut row = vec![num(s as f64 * dt)];
                row.extend(coords(grid, node));
                row.push(name.to_string());
                row.push(num(per_channel[c][node]));
                row.push(num(2.0 * m.std[s][c][node]));
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub const ENSEMBLE_VALUES: [&str; 4] = ["controlled_mean", "controlled_std", "uncontrolled_mean", "uncontrolled_std"];

/// `t,x[,y],channel,controlled_mean,controlled_std,uncontrolled_mean,uncontrolled_std`.
pub fn write_ensemble(path: &Path, system: &dyn Dynamics, controlled: &Moments, uncontrolled: &Moments) -> Result<()> {
    let grid = system.grid();
    let dt = system.config().dt;
    let mut w = writer(path)?;
    w.write_record(header(grid.dim(), &ENSEMBLE_VALUES))?;
    for s in 0..controlled.mean.len() {
        for (c, name) in system.channel_names().iter().enumerate() {
            for node in 0..grid.node_count() {
                let mut row = vec![num(s as f64 * dt)];
                row.extend(coords(grid, node));
                row.push(name.to_string());
                for v in [
                    controlled.mean[s][c][node],
                    controlled.std[s][c][node],
                    uncontrolled.mean[s][c][node],
                    uncontrolled.std[s][c][node],
                ] {
                    row.push(num(v));
                }
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}
