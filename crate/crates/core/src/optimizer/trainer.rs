//! The co-design training loop: rollouts under the current policy and
//! actuators, weighting, gradients, and one Adam step per parameter group.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{AdamHyper, AdamState};
use super::cost::CompiledCost;
use super::loss::{loss_gradients, Batch, GradientMode};
use crate::actuation::{influence, ActuatorDesign};
use crate::error::{Result, StsoError};
use crate::policy::Policy;
use crate::systems::{rollout, Dynamics, RolloutOptions, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearningRates {
    pub policy: f64,
    pub placement: f64,
    pub width: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self { policy: 1e-3, placement: 3e-2, width: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: u64,
    pub rollouts: usize,
    pub rates: LearningRates,
    pub adam: AdamHyper,
    pub mode: GradientMode,
    pub seed: u64,
    /// Diverged rollouts are dropped while they stay below this share of the
    /// batch; otherwise the iteration aborts.
    pub max_diverged_fraction: f64,
}

impl TrainConfig {
    pub fn new(iterations: u64, rollouts: usize, seed: u64) -> Self {
        Self {
            iterations,
            rollouts,
            rates: LearningRates::default(),
            adam: AdamHyper::default(),
            mode: GradientMode::default(),
            seed,
            max_diverged_fraction: 0.2,
        }
    }
}

/// Everything that changes from one iteration to the next.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerState {
    /// Number of completed iterations.
    pub iteration: u64,
    pub policy: Policy,
    pub design: ActuatorDesign,
    pub adam_policy: AdamState,
    pub adam_placement: AdamState,
    pub adam_width: AdamState,
}

impl TrainerState {
    pub fn new(policy: Policy, design: ActuatorDesign, dim: usize, cfg: &TrainConfig) -> Self {
        let n = design.count();
        Self {
            iteration: 0,
            adam_policy: AdamState::new(policy.params().len(), cfg.rates.policy, cfg.adam),
            adam_placement: AdamState::new(n * dim, cfg.rates.placement, cfg.adam),
            adam_width: AdamState::new(n, cfg.rates.width, cfg.adam),
            policy,
            design,
        }
    }
}

/// One line of the optimization report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u64,
    pub loss: f64,
    pub mean_cost: f64,
    pub min_cost: f64,
    pub max_cost: f64,
    /// Mean over rollouts of the squared target deviation at the final time.
    pub mean_final_error: f64,
    /// `1 / Σ w²`.
    pub effective_sample_size: f64,
    pub diverged: usize,
    /// Applied positions before this iteration's update.
    pub positions: Vec<Vec<f64>>,
    pub widths: Vec<f64>,
}

pub struct Trainer<'a> {
    system: &'a dyn Dynamics,
    cost: &'a CompiledCost,
    cfg: TrainConfig,
    state: TrainerState,
}

impl<'a> Trainer<'a> {
    pub fn new(system: &'a dyn Dynamics, cost: &'a CompiledCost, cfg: TrainConfig, state: TrainerState) -> Result<Self> {
        if cfg.rollouts == 0 {
            return Err(StsoError::config("optimizer.rollouts", "need at least one rollout"));
        }
        let arch = state.policy.architecture();
        if arch.input_len() != system.grid().node_count() * system.channel_names().len() {
            return Err(StsoError::ShapeMismatch {
                expected: system.grid().node_count() * system.channel_names().len(),
                got: arch.input_len(),
            });
        }
        if arch.output_len() != state.design.count() {
            return Err(StsoError::ShapeMismatch { expected: state.design.count(), got: arch.output_len() });
        }
        Ok(Self { system, cost, cfg, state })
    }

    pub fn state(&self) -> &TrainerState {
        &self.state
    }

    pub fn into_state(self) -> TrainerState {
        self.state
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn is_done(&self) -> bool {
        self.state.iteration >= self.cfg.iterations
    }

    /// Draw the batch for `iteration` under the current parameters.
    pub fn sample_batch(&self, iteration: u64) -> Result<(Batch, usize)> {
        let infl = influence(&self.state.design, self.system.grid());
        let results: Vec<Result<Trajectory>> = (0..self.cfg.rollouts)
            .into_par_iter()
            .map(|r| {
                let opts = RolloutOptions::training(self.cfg.seed, iteration, r as u64);
                rollout(self.system, &self.state.policy, &infl, &opts)
            })
            .collect();
        let mut trajectories = Vec::with_capacity(results.len());
        let mut diverged = 0;
        for r in results {
            match r {
                Ok(t) => trajectories.push(t),
                Err(StsoError::Diverged { .. }) => diverged += 1,
                Err(e) => return Err(e),
            }
        }
        let limit = self.cfg.max_diverged_fraction * self.cfg.rollouts as f64;
        if trajectories.is_empty() || diverged as f64 >= limit && diverged > 0 {
            return Err(StsoError::Aborted { iteration, diverged, rollouts: self.cfg.rollouts });
        }
        let costs = trajectories.iter().map(|t| self.cost.trajectory_cost(t)).collect();
        Ok((Batch { trajectories, costs }, diverged))
    }

    /// Run one iteration and apply the updates.
    pub fn iterate(&mut self) -> Result<IterationRecord> {
        let iteration = self.state.iteration + 1;
        let (batch, diverged) = self.sample_batch(iteration)?;
        let rho = self.system.config().rho;
        let grads = loss_gradients(self.system, &batch, &self.state.policy, &self.state.design, rho, self.cfg.mode)?;

        let n = batch.costs.len() as f64;
        let mean_cost = batch.costs.iter().sum::<f64>() / n;
        let min_cost = batch.costs.iter().copied().fold(f64::INFINITY, f64::min);
        let max_cost = batch.costs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean_final_error =
            batch.trajectories.iter().map(|t| self.cost.target_error(t.final_state())).sum::<f64>() / n;
        let ess = 1.0 / grads.stats.iter().map(|s| s.weight * s.weight).sum::<f64>();
        let dim = self.system.grid().dim();
        let record = IterationRecord {
            iteration,
            loss: grads.loss,
            mean_cost,
            min_cost,
            max_cost,
            mean_final_error,
            effective_sample_size: ess,
            diverged,
            positions: self.state.design.positions_for_report(dim),
            widths: self.state.design.widths.clone(),
        };

        let st = &mut self.state;
        let dp = st.adam_policy.delta(&grads.policy)?;
        st.policy.update_params(|w| {
            for (p, d) in w.iter_mut().zip(&dp) {
                *p += d;
            }
        });
        let flat: Vec<f64> = grads.placement.iter().flat_map(|g| g[..dim].to_vec()).collect();
        let dflat = st.adam_placement.delta(&flat)?;
        let dv: Vec<[f64; 2]> = dflat
            .chunks(dim)
            .map(|c| {
                let mut v = [0.0; 2];
                v[..dim].copy_from_slice(c);
                v
            })
            .collect();
        let dwidth = st.adam_width.delta(&grads.width)?;
        st.design.update(self.system.grid(), &dv, &dwidth);
        if !st.policy.is_finite() || !st.design.widths.iter().all(|w| w.is_finite()) {
            return Err(StsoError::Aborted { iteration, diverged: self.cfg.rollouts, rollouts: self.cfg.rollouts });
        }
        st.iteration = iteration;
        Ok(record)
    }

    /// Iterate until the configured count, handing each record and the
    /// post-update state to `observe`.
    pub fn run(&mut self, mut observe: impl FnMut(&IterationRecord, &TrainerState) -> Result<()>) -> Result<()> {
        while !self.is_done() {
            let rec = self.iterate()?;
            observe(&rec, &self.state)?;
        }
        Ok(())
    }
}

/// Summary of evaluation rollouts under fixed parameters.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub trajectories: Vec<Trajectory>,
    pub costs: Vec<f64>,
    pub final_errors: Vec<f64>,
}

impl Evaluation {
    pub fn mean_cost(&self) -> f64 {
        mean(&self.costs)
    }

    pub fn mean_final_error(&self) -> f64 {
        mean(&self.final_errors)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Rollouts on the evaluation streams, independent of the training draws.
pub fn evaluate(
    system: &dyn Dynamics,
    cost: &CompiledCost,
    policy: &Policy,
    design: &ActuatorDesign,
    seed: u64,
    rollouts: usize,
    noise: bool,
) -> Result<Evaluation> {
    if rollouts == 0 {
        return Err(StsoError::InvalidArgument("need at least one rollout".into()));
    }
    let infl = influence(design, system.grid());
    let trajectories = (0..rollouts)
        .into_par_iter()
        .map(|r| rollout(system, policy, &infl, &RolloutOptions::evaluation(seed, r as u64, noise)))
        .collect::<Result<Vec<_>>>()?;
    let costs = trajectories.iter().map(|t| cost.trajectory_cost(t)).collect();
    let final_errors = trajectories.iter().map(|t| cost.target_error(t.final_state())).collect();
    Ok(Evaluation { trajectories, costs, final_errors })
}
