//! Importance-weighted loss over a frozen batch of rollouts and its gradients.
//!
//! Per rollout `r` with state cost `J_r`:
//! `N_r = Σ_t ⟨Φ_t, dW_t⟩`, `P_r = Σ_t ‖Φ_t‖² dt`,
//! `J̃_r = J_r + N_r/√ρ + P_r/2`, `w = softmax(−ρ J̃)` and
//! `L = Σ_r w_r (−√ρ N_r − (ρ/2) P_r)`.
//! Gradients treat the recorded states and noise as fixed samples and flow
//! through every policy evaluation inside `N` and `P`, never through the
//! dynamics or `J`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::actuation::{influence, placement_gradient, width_gradient, ActuatorDesign, InfluenceMatrix};
use crate::error::{Result, StsoError};
use crate::field::{weighted_dot, Field, StateVector};
use crate::policy::Policy;
use crate::systems::{Dynamics, Trajectory};

/// How the loss is differentiated with respect to `N_r` and `P_r`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    /// Differentiate the loss expression as written, weights included.
    #[default]
    Literal,
    /// Hold the Gibbs weights fixed.
    StopGradient,
    /// Hold the weights fixed and keep only the noise term: the score of the
    /// sampling measure once the recorded increments are re-expressed under
    /// the uncontrolled measure.
    OnPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutStats {
    pub cost: f64,
    pub noise: f64,
    pub effort: f64,
    pub importance_cost: f64,
    pub weight: f64,
}

/// `J̃ = J + N/√ρ + P/2`.
pub fn importance_cost(cost: f64, noise: f64, effort: f64, rho: f64) -> f64 {
    cost + noise / rho.sqrt() + 0.5 * effort
}

/// Self-normalised `exp(−ρ J̃_r)`, shifted by the smallest `ρ J̃` first.
pub fn gibbs_weights(importance_costs: &[f64], rho: f64) -> Result<Vec<f64>> {
    if importance_costs.is_empty() {
        return Err(StsoError::InvalidArgument("no rollouts to weight".into()));
    }
    if importance_costs.iter().any(|c| !c.is_finite()) {
        return Err(StsoError::InvalidArgument("non-finite importance cost".into()));
    }
    let scaled: Vec<f64> = importance_costs.iter().map(|c| rho * c).collect();
    let min = scaled.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = scaled.iter().map(|s| (min - s).exp()).collect();
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|r| r / total).collect();
    // Fold the rounding residue into the largest weight so that the plain
    // left-to-right sum comes out at 1.
    let top = (0..w.len()).max_by(|&a, &b| w[a].total_cmp(&w[b])).unwrap_or(0);
    for _ in 0..4 {
        let residue = 1.0 - w.iter().sum::<f64>();
        if residue == 0.0 {
            break;
        }
        w[top] += residue;
    }
    Ok(w)
}

pub fn batch_stats(costs: &[f64], noises: &[f64], efforts: &[f64], rho: f64) -> Result<Vec<RolloutStats>> {
    let jt: Vec<f64> = (0..costs.len()).map(|r| importance_cost(costs[r], noises[r], efforts[r], rho)).collect();
    let w = gibbs_weights(&jt, rho)?;
    Ok((0..costs.len())
        .map(|r| RolloutStats { cost: costs[r], noise: noises[r], effort: efforts[r], importance_cost: jt[r], weight: w[r] })
        .collect())
}

fn per_rollout_term(s: &RolloutStats, rho: f64) -> f64 {
    -rho.sqrt() * s.noise - 0.5 * rho * s.effort
}

pub fn compute_loss(stats: &[RolloutStats], rho: f64) -> f64 {
    stats.iter().map(|s| s.weight * per_rollout_term(s, rho)).sum()
}

/// `(∂L/∂N_r, ∂L/∂P_r)` for every rollout.
pub fn loss_sensitivities(stats: &[RolloutStats], rho: f64, mode: GradientMode) -> Vec<(f64, f64)> {
    let loss = compute_loss(stats, rho);
    let sr = rho.sqrt();
    stats
        .iter()
        .map(|s| match mode {
            GradientMode::Literal => {
                let k = s.weight * (1.0 + per_rollout_term(s, rho) - loss);
                (-sr * k, -0.5 * rho * k)
            }
            GradientMode::StopGradient => (-sr * s.weight, -0.5 * rho * s.weight),
            GradientMode::OnPolicy => (-sr * s.weight, 0.0),
        })
        .collect()
}

/// Control force fields `Φ_t` for every step of a trajectory, given the
/// policy outputs `u_t`.
fn forces(system: &dyn Dynamics, infl: &InfluenceMatrix, state: &StateVector, u: &[f64]) -> Result<(Field, Vec<Field>)> {
    let a = infl.apply(u)?;
    let phi = system.control_force(state, &a);
    Ok((a, phi))
}

/// `Σ_t ⟨Φ_t, dW_t⟩` using the recorded policy outputs.
pub fn compute_n(system: &dyn Dynamics, traj: &Trajectory, infl: &InfluenceMatrix) -> Result<f64> {
    check_recorded(traj)?;
    let grid = system.grid();
    let mut total = 0.0;
    for t in 0..traj.steps() {
        let (_, phi) = forces(system, infl, &traj.states[t], &traj.controls[t])?;
        for (f, dw) in phi.iter().zip(&traj.noises[t].channels) {
            total += weighted_dot(grid, f.values(), dw.values());
        }
    }
    Ok(total)
}

/// `Σ_t ‖Φ_t‖² dt`. When the control force is the actuation field itself this
/// is the Gram form `Σ_t uᵀ ⟨m, mᵀ⟩ u dt`.
pub fn compute_p(system: &dyn Dynamics, traj: &Trajectory, infl: &InfluenceMatrix) -> Result<f64> {
    check_recorded(traj)?;
    let dt = system.config().dt;
    let grid = system.grid();
    let mut total = 0.0;
    if system.control_is_actuation() {
        let gram = infl.gram();
        for u in &traj.controls {
            let mut q = 0.0;
            for (i, ui) in u.iter().enumerate() {
                for (j, uj) in u.iter().enumerate() {
                    q += ui * uj * gram[i][j];
                }
            }
            total += q * dt;
        }
    } else {
        for t in 0..traj.steps() {
            let (_, phi) = forces(system, infl, &traj.states[t], &traj.controls[t])?;
            total += phi.iter().map(|f| weighted_dot(grid, f.values(), f.values())).sum::<f64>() * dt;
        }
    }
    Ok(total)
}

fn check_recorded(traj: &Trajectory) -> Result<()> {
    let steps = traj.controls.len();
    if traj.noises.len() != steps || traj.states.len() != steps + 1 {
        return Err(StsoError::InvalidArgument(format!(
            "trajectory has {} states, {} controls and {} noise increments",
            traj.states.len(),
            steps,
            traj.noises.len()
        )));
    }
    Ok(())
}

/// Rollouts held fixed while the loss is evaluated and differentiated.
#[derive(Debug, Clone)]
pub struct Batch {
    pub trajectories: Vec<Trajectory>,
    pub costs: Vec<f64>,
}

/// Re-evaluate `N`, `P`, the weights and `L` on a frozen batch with the given
/// policy and design. Recorded controls are ignored; the policy is re-run on
/// the recorded states.
pub fn frozen_loss(system: &dyn Dynamics, batch: &Batch, policy: &Policy, design: &ActuatorDesign, rho: f64) -> Result<f64> {
    let infl = influence(design, system.grid());
    let mut ns = Vec::with_capacity(batch.trajectories.len());
    let mut ps = Vec::with_capacity(batch.trajectories.len());
    for traj in &batch.trajectories {
        let relabeled = Trajectory {
            states: traj.states.clone(),
            controls: traj.states[..traj.steps()].iter().map(|s| policy.forward_state(s)).collect::<Result<_>>()?,
            noises: traj.noises.clone(),
        };
        ns.push(compute_n(system, &relabeled, &infl)?);
        ps.push(compute_p(system, &relabeled, &infl)?);
    }
    let stats = batch_stats(&batch.costs, &ns, &ps, rho)?;
    Ok(compute_loss(&stats, rho))
}

#[derive(Debug, Clone)]
pub struct LossGradients {
    pub loss: f64,
    pub stats: Vec<RolloutStats>,
    pub policy: Vec<f64>,
    pub placement: Vec<[f64; 2]>,
    pub width: Vec<f64>,
}

struct RolloutGradient {
    policy: Vec<f64>,
    influence: Vec<Vec<f64>>,
}

fn rollout_gradient(
    system: &dyn Dynamics,
    traj: &Trajectory,
    infl: &InfluenceMatrix,
    policy: &Policy,
    (g_n, g_p): (f64, f64),
) -> Result<RolloutGradient> {
    let grid = system.grid();
    let weights = grid.quadrature_weights();
    let dt = system.config().dt;
    let nodes = grid.node_count();
    let mut out = RolloutGradient { policy: vec![0.0; policy.params().len()], influence: vec![vec![0.0; nodes]; infl.count()] };
    for t in 0..traj.steps() {
        let state = &traj.states[t];
        let record = policy.forward_recorded(&state.flatten())?;
        let u = record.output();
        let (a, phi) = forces(system, infl, state, u)?;
        let upstream: Vec<Field> = phi
            .iter()
            .zip(&traj.noises[t].channels)
            .map(|(f, dw)| {
                let v = (0..nodes)
                    .map(|n| weights[n] * (g_n * dw.values()[n] + g_p * 2.0 * f.values()[n] * dt))
                    .collect();
                Field::from_values(grid, v)
            })
            .collect::<Result<_>>()?;
        let da = system.control_force_vjp(state, &a, &upstream);
        let da = da.values();
        let du: Vec<f64> = infl.rows().iter().map(|m| m.values().iter().zip(da).map(|(x, y)| x * y).sum()).collect();
        for (row, ui) in out.influence.iter_mut().zip(u) {
            for (r, d) in row.iter_mut().zip(da) {
                *r += ui * d;
            }
        }
        policy.accumulate_param_gradient(&record, &du, &mut out.policy)?;
    }
    Ok(out)
}

/// Loss value and its gradients with respect to the policy parameters, the
/// snapped actuator positions and the actuator widths.
pub fn loss_gradients(
    system: &dyn Dynamics,
    batch: &Batch,
    policy: &Policy,
    design: &ActuatorDesign,
    rho: f64,
    mode: GradientMode,
) -> Result<LossGradients> {
    let grid = *system.grid();
    let infl = influence(design, &grid);
    let ns = batch.trajectories.par_iter().map(|t| compute_n(system, t, &infl)).collect::<Result<Vec<_>>>()?;
    let ps = batch.trajectories.par_iter().map(|t| compute_p(system, t, &infl)).collect::<Result<Vec<_>>>()?;
    let stats = batch_stats(&batch.costs, &ns, &ps, rho)?;
    let loss = compute_loss(&stats, rho);
    let sens = loss_sensitivities(&stats, rho, mode);
    let parts = batch
        .trajectories
        .par_iter()
        .zip(&sens)
        .map(|(traj, s)| {
            if s.0 == 0.0 && s.1 == 0.0 {
                Ok(None)
            } else {
                rollout_gradient(system, traj, &infl, policy, *s).map(Some)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    // Ordered reduction keeps the sum independent of scheduling.
    let mut policy_grad = vec![0.0; policy.params().len()];
    let mut infl_grad = vec![vec![0.0; grid.node_count()]; design.count()];
    for part in parts.into_iter().flatten() {
        for (g, p) in policy_grad.iter_mut().zip(&part.policy) {
            *g += p;
        }
        for (row, prow) in infl_grad.iter_mut().zip(&part.influence) {
            for (g, p) in row.iter_mut().zip(prow) {
                *g += p;
            }
        }
    }
    let upstream: Vec<Field> = infl_grad.into_iter().map(|v| Field::from_values(&grid, v)).collect::<Result<_>>()?;
    let placement = placement_gradient(&upstream, design, &grid)?;
    let width = width_gradient(&upstream, design, &grid)?;
    Ok(LossGradients { loss, stats, policy: policy_grad, placement, width })
}
