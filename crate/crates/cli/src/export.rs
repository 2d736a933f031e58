//! `export`: plot-ready CSV from a run directory.
//!
//! - `convergence`: `iteration,loss,mean_cost,mean_final_error`, one row per
//!   report line;
//! - `contour`: `t,x[,y],channel,value` for the evaluation rollout with
//!   noise on (or off with `--source clean`);
//! - `final_snapshot`: `x[,y],channel,controlled_mean,controlled_std,
//!   uncontrolled_mean,uncontrolled_std` at the final time.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use crate::output::num;
use crate::run::{read_report, REPORT};
use crate::{usage, ExportKind, Source};

fn require(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("missing input {}", path.display())))
    }
}

fn open_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

pub fn kind_name(kind: ExportKind) -> &'static str {
    match kind {
        ExportKind::Contour => "contour",
        ExportKind::FinalSnapshot => "final_snapshot",
        ExportKind::Convergence => "convergence",
    }
}

pub fn cmd_export(run_dir: &Path, kind: ExportKind, out: Option<&Path>, source: Source) -> Result<PathBuf> {
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| run_dir.join("export").join(format!("{}.csv", kind_name(kind))));
    match kind {
        ExportKind::Convergence => convergence(run_dir, &out)?,
        ExportKind::Contour => {
            let name = match source {
                Source::Noise => "trajectory_noise.csv",
                Source::Clean => "trajectory_clean.csv",
            };
            contour(&run_dir.join("final").join(name), &out)?
        }
        ExportKind::FinalSnapshot => final_snapshot(&run_dir.join("final").join("ensemble.csv"), &out)?,
    }
    Ok(out)
}

fn convergence(run_dir: &Path, out: &Path) -> Result<()> {
    require(&run_dir.join(REPORT))?;
    let records = read_report(run_dir)?;
    let mut w = open_writer(out)?;
    w.write_record(["iteration", "loss", "mean_cost", "mean_final_error"])?;
    for r in records {
        w.write_record([r.iteration.to_string(), num(r.loss), num(r.mean_cost), num(r.mean_final_error)])?;
    }
    w.flush()?;
    Ok(())
}

fn contour(input: &Path, out: &Path) -> Result<()> {
    require(input)?;
    let mut r = csv::Reader::from_path(input)?;
    let headers = r.headers()?.clone();
    if headers.get(0) != Some("t") || headers.iter().last() != Some("value") {
        anyhow::bail!("{} is not a trajectory file", input.display());
    }
    let mut w = open_writer(out)?;
    w.write_record(&headers)?;
    for rec in r.records() {
        w.write_record(&rec?)?;
    }
    w.flush()?;
    Ok(())
}

fn final_snapshot(input: &Path, out: &Path) -> Result<()> {
    require(input)?;
    let mut r = csv::Reader::from_path(input)?;
    let headers = r.headers()?.clone();
    let rows: Vec<csv::StringRecord> = r.records().collect::<std::result::Result<_, _>>()?;
    let t_of = |rec: &csv::StringRecord| -> Result<f64> { Ok(rec.get(0).unwrap_or("").parse::<f64>()?) };
    let mut last = f64::NEG_INFINITY;
    for rec in &rows {
        last = last.max(t_of(rec)?);
    }
    let mut w = open_writer(out)?;
    w.write_record(headers.iter().skip(1))?;
    for rec in &rows {
        if t_of(rec)? == last {
            w.write_record(rec.iter().skip(1))?;
        }
    }
    w.flush()?;
    Ok(())
}
