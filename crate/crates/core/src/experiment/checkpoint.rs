//! Checkpoint directories.
//!
//! Layout of `ckpt_XXXX/`:
//! - `state.json`: iteration, seed, actuator design, Adam step counters and
//!   the moment layout;
//! - `policy.json` + `policy.bin`: blob header and little-endian f64 params;
//! - `adam.bin`: first then second moments of every group, in the order
//!   listed in `state.json`.
//!
//! Noise streams are keyed by (seed, iteration, rollout, step), so the
//! iteration count is the whole random-number position.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::actuation::ActuatorDesign;
use crate::error::{Result, StsoError};
use crate::optimizer::{AdamHyper, AdamState, TrainerState};
use crate::policy::{f64s_to_le_bytes, le_bytes_to_f64s, BlobHeader, Policy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdamGroup {
    name: String,
    learning_rate: f64,
    hyper: AdamHyper,
    step: u64,
    len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateFile {
    format: String,
    iteration: u64,
    seed: u64,
    /// First iteration whose noise has not been drawn yet.
    next_noise_iteration: u64,
    design: ActuatorDesign,
    adam: Vec<AdamGroup>,
}

const GROUPS: [&str; 3] = ["policy", "placement", "width"];

pub fn checkpoint_name(iteration: u64) -> String {
    format!("ckpt_{iteration:04}")
}

pub fn checkpoint_dir(run_dir: &Path, iteration: u64) -> PathBuf {
    run_dir.join("checkpoints").join(checkpoint_name(iteration))
}

/// Write `state` into `dir`, replacing any previous contents.
pub fn save_checkpoint(dir: &Path, state: &TrainerState, seed: u64) -> Result<()> {
    fs::create_dir_all(dir)?;
    let groups = [&state.adam_policy, &state.adam_placement, &state.adam_width];
    let file = StateFile {
        format: "f64-le".into(),
        iteration: state.iteration,
        seed,
        next_noise_iteration: state.iteration + 1,
        design: state.design.clone(),
        adam: GROUPS
            .iter()
            .zip(groups)
            .map(|(name, g)| AdamGroup {
                name: name.to_string(),
                learning_rate: g.learning_rate,
                hyper: g.hyper,
                step: g.step,
                len: g.len(),
            })
            .collect(),
    };
    let (header, bytes) = state.policy.to_blob();
    fs::write(dir.join("policy.json"), serde_json::to_string_pretty(&header)?)?;
    fs::write(dir.join("policy.bin"), bytes)?;
    let moments: Vec<f64> = groups.iter().flat_map(|g| g.m.iter().chain(&g.v).copied()).collect();
    fs::write(dir.join("adam.bin"), f64s_to_le_bytes(&moments))?;
    fs::write(dir.join("state.json"), serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

fn read(dir: &Path, name: &str) -> Result<Vec<u8>> {
    fs::read(dir.join(name))
        .map_err(|e| StsoError::InvalidArgument(format!("checkpoint {}: cannot read {name}: {e}", dir.display())))
}

/// Load the policy stored in a checkpoint.
pub fn load_policy(dir: &Path) -> Result<Policy> {
    let header: BlobHeader = serde_json::from_slice(&read(dir, "policy.json")?)?;
    Policy::from_blob(&header, &read(dir, "policy.bin")?)
}

/// Returns the restored state and the seed it was trained with.
pub fn load_checkpoint(dir: &Path) -> Result<(TrainerState, u64)> {
    let file: StateFile = serde_json::from_slice(&read(dir, "state.json")?)?;
    if file.format != "f64-le" {
        return Err(StsoError::InvalidArgument(format!("unsupported checkpoint format {}", file.format)));
    }
    let policy = load_policy(dir)?;
    let moments = le_bytes_to_f64s(&read(dir, "adam.bin")?)?;
    let expected: usize = file.adam.iter().map(|g| 2 * g.len).sum();
    if moments.len() != expected || file.adam.len() != GROUPS.len() {
        return Err(StsoError::ShapeMismatch { expected, got: moments.len() });
    }
    let mut offset = 0;
    let mut states = Vec::new();
    for g in &file.adam {
        let m = moments[offset..offset + g.len].to_vec();
        let v = moments[offset + g.len..offset + 2 * g.len].to_vec();
        offset += 2 * g.len;
        states.push(AdamState { learning_rate: g.learning_rate, hyper: g.hyper, step: g.step, m, v });
    }
    let adam_width = states.pop().expect("three groups");
    let adam_placement = states.pop().expect("three groups");
    let adam_policy = states.pop().expect("three groups");
    if adam_policy.len() != policy.params().len() {
        return Err(StsoError::ShapeMismatch { expected: policy.params().len(), got: adam_policy.len() });
    }
    let state = TrainerState { iteration: file.iteration, policy, design: file.design, adam_policy, adam_placement, adam_width };
    Ok((state, file.seed))
}
