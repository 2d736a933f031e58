use super::Dynamics;
use crate::actuation::InfluenceMatrix;
use crate::error::{Result, StsoError};
use crate::field::{sample_noise, NoiseIncrement, StateVector};
use crate::policy::Policy;
use crate::rng::{Purpose, StreamKey};

/// States at `t = 0, dt, …, T` with the policy outputs and noise applied
/// between them.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<StateVector>,
    pub controls: Vec<Vec<f64>>,
    pub noises: Vec<NoiseIncrement>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.controls.len()
    }

    pub fn final_state(&self) -> &StateVector {
        self.states.last().expect("trajectory has an initial state")
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RolloutOptions {
    /// Noise draws come from `key.step(t)`; the initial condition from the
    /// same key with the initial-condition purpose.
    pub key: StreamKey,
    /// With noise off, zero increments are recorded.
    pub noise: bool,
}

impl RolloutOptions {
    pub fn training(seed: u64, iteration: u64, rollout: u64) -> Self {
        Self { key: StreamKey::new(seed, Purpose::Noise).iteration(iteration).rollout(rollout), noise: true }
    }

    pub fn evaluation(seed: u64, rollout: u64, noise: bool) -> Self {
        Self { key: StreamKey::new(seed, Purpose::Evaluation).rollout(rollout), noise }
    }
}

pub fn rollout(
    system: &dyn Dynamics,
    policy: &Policy,
    influence: &InfluenceMatrix,
    opts: &RolloutOptions,
) -> Result<Trajectory> {
    let cfg = system.config();
    let grid = *system.grid();
    let steps = cfg.steps();
    let channels = system.noise_channels();
    if influence.count() != policy.architecture().output_len() {
        return Err(StsoError::ShapeMismatch { expected: policy.architecture().output_len(), got: influence.count() });
    }
    let mut ic_key = opts.key;
    ic_key.purpose = Purpose::InitialCondition;
    let mut state = system.initial_state(&mut ic_key.rng());
    let mut states = Vec::with_capacity(steps + 1);
    let mut controls = Vec::with_capacity(steps);
    let mut noises = Vec::with_capacity(steps);
    for t in 0..steps {
        let u = policy.forward_state(&state)?;
        let field = influence.apply(&u)?;
        let dw = if opts.noise {
            sample_noise(&grid, cfg.dt, channels, &mut opts.key.step(t as u64).rng())?
        } else {
            NoiseIncrement::zeros(&grid, channels)
        };
        let next = system.step(&state, &field, &dw).map_err(|e| match e {
            StsoError::Diverged { .. } => StsoError::Diverged { step: t + 1 },
            other => other,
        })?;
        states.push(std::mem::replace(&mut state, next));
        controls.push(u);
        noises.push(dw);
    }
    states.push(state);
    Ok(Trajectory { states, controls, noises })
}
