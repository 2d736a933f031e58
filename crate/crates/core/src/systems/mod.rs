//! Time steppers for the six experimental systems and the rollout driver.
//!
//! Each system exposes the same [`Dynamics`] surface: build an initial state,
//! turn an actuation field into the control force that enters next to the
//! noise (`G(Φ dt + dW/√ρ)`), and advance one step. The optimizer only ever
//! sees control forces and recorded noise, never the internals of a stepper.

mod beam;
mod burgers;
mod heat;
mod nagumo;
mod rollout;
mod softlimb;

pub use beam::EulerBernoulli1d;
pub use burgers::Burgers1d;
pub use heat::{Heat1d, Heat2d};
pub use nagumo::Nagumo1d;
pub use rollout::{rollout, RolloutOptions, Trajectory};
pub use softlimb::{member_force, MemberForce, SoftLimb2d};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, StsoError};
use crate::field::{Field, Grid, NoiseIncrement, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    Heat1d,
    Burgers1d,
    Nagumo1d,
    EulerBernoulli1d,
    Heat2d,
    SoftLimb2d,
}

impl SystemKind {
    pub const ALL: [SystemKind; 6] = [
        SystemKind::Heat1d,
        SystemKind::Burgers1d,
        SystemKind::Nagumo1d,
        SystemKind::EulerBernoulli1d,
        SystemKind::Heat2d,
        SystemKind::SoftLimb2d,
    ];

    pub fn dim(self) -> usize {
        match self {
            SystemKind::Heat2d | SystemKind::SoftLimb2d => 2,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SystemKind::Heat1d => "heat1d",
            SystemKind::Burgers1d => "burgers1d",
            SystemKind::Nagumo1d => "nagumo1d",
            SystemKind::EulerBernoulli1d => "euler_bernoulli1d",
            SystemKind::Heat2d => "heat2d",
            SystemKind::SoftLimb2d => "soft_limb2d",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    /// Zero interior; boundary values come from the boundary condition.
    Zero,
    /// `amplitude · sin(mode·π·x/a)` (1D only).
    Sine { mode: usize, amplitude: f64 },
    /// Traveling-front profile `(1 + exp(−(center − x)/√2))⁻¹`.
    Front { center: f64 },
    /// Independent `U[0, amplitude]` draws on interior nodes, per rollout.
    Random { amplitude: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub kind: SystemKind,
    /// Domain size per axis.
    pub extent: Vec<f64>,
    /// Grid points along x (and along y unless `points_y` is set).
    pub points: usize,
    pub points_y: Option<usize>,
    pub dt: f64,
    pub horizon: f64,
    /// Noise enters as `dW / √ρ`.
    pub rho: f64,
    /// Diffusivity (heat, Nagumo) or viscosity (Burgers).
    pub epsilon: f64,
    /// Nagumo reaction root.
    pub alpha: f64,
    /// Dirichlet boundary value (Burgers).
    pub boundary_value: f64,
    /// Kelvin-Voigt coefficient of the beam.
    pub kelvin_voigt: f64,
    /// Viscous damping of the beam.
    pub viscous_damping: f64,
    pub density: f64,
    pub tensile: f64,
    pub shear: f64,
    pub retardation: f64,
    pub gravity: f64,
    pub gravity_scale: f64,
    /// Rest-length change per unit actuation in the soft limb.
    pub actuation_gain: f64,
    pub initial: InitialCondition,
}

impl SystemConfig {
    /// Defaults per system. Values not fixed by the published experiments are
    /// stability-tuned artifact choices.
    pub fn default_for(kind: SystemKind) -> Self {
        let base = SystemConfig {
            kind,
            extent: vec![1.0],
            points: 64,
            points_y: None,
            dt: 0.01,
            horizon: 1.0,
            rho: 10.0,
            epsilon: 0.1,
            alpha: -0.5,
            boundary_value: 0.0,
            kelvin_voigt: 0.0,
            viscous_damping: 0.0,
            density: 1.0,
            tensile: 0.0,
            shear: 0.0,
            retardation: 0.0,
            gravity: 0.0,
            gravity_scale: 1.0,
            actuation_gain: 0.0,
            initial: InitialCondition::Zero,
        };
        match kind {
            SystemKind::Heat1d => base,
            SystemKind::Burgers1d => SystemConfig { boundary_value: 1.0, epsilon: 0.1, ..base },
            SystemKind::Nagumo1d => SystemConfig {
                extent: vec![20.0],
                epsilon: 1.0,
                alpha: -0.5,
                horizon: 3.5,
                dt: 0.01,
                initial: InitialCondition::Front { center: 2.0 },
                ..base
            },
            SystemKind::EulerBernoulli1d => SystemConfig {
                points: 32,
                dt: 1e-3,
                kelvin_voigt: 1e-4,
                viscous_damping: 0.1,
                initial: InitialCondition::Sine { mode: 2, amplitude: 0.05 },
                ..base
            },
            SystemKind::Heat2d => SystemConfig {
                extent: vec![1.0, 1.0],
                points: 25,
                epsilon: 0.05,
                initial: InitialCondition::Random { amplitude: 0.1 },
                ..base
            },
            SystemKind::SoftLimb2d => SystemConfig {
                extent: vec![8.0, 2.0],
                points: 9,
                points_y: Some(3),
                dt: 1e-3,
                rho: 100.0,
                density: 1.0,
                tensile: 2000.0,
                shear: 1000.0,
                retardation: 0.02,
                gravity: 0.02,
                gravity_scale: 100.0,
                actuation_gain: 0.1,
                ..base
            },
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        match self.kind.dim() {
            1 => Grid::new(1, &self.extent, self.points),
            _ => {
                let ext = match self.extent.as_slice() {
                    [e] => [*e, *e],
                    [x, y] => [*x, *y],
                    _ => return Err(StsoError::config("system.extent", "expected one or two extents")),
                };
                Grid::rect(ext, [self.points, self.points_y.unwrap_or(self.points)])
            }
        }
    }

    /// Number of time steps: `round(T/dt)`.
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn noise_scale(&self) -> f64 {
        1.0 / self.rho.sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, path: &str, msg: &str| if ok { Ok(()) } else { Err(StsoError::config(path, msg)) };
        check(self.dt > 0.0 && self.dt.is_finite(), "system.dt", "must be positive")?;
        check(self.horizon >= self.dt && self.horizon.is_finite(), "system.horizon", "must be at least dt")?;
        check(self.rho > 0.0 && !self.rho.is_nan(), "system.rho", "must be positive")?;
        let params = [
            ("system.epsilon", self.epsilon),
            ("system.alpha", self.alpha),
            ("system.boundary_value", self.boundary_value),
            ("system.kelvin_voigt", self.kelvin_voigt),
            ("system.viscous_damping", self.viscous_damping),
            ("system.density", self.density),
            ("system.tensile", self.tensile),
            ("system.shear", self.shear),
            ("system.retardation", self.retardation),
            ("system.gravity", self.gravity),
            ("system.gravity_scale", self.gravity_scale),
            ("system.actuation_gain", self.actuation_gain),
        ];
        for (path, v) in params {
            check(v.is_finite(), path, "must be finite")?;
        }
        check(self.epsilon >= 0.0, "system.epsilon", "must be nonnegative")?;
        check(self.kelvin_voigt >= 0.0, "system.kelvin_voigt", "must be nonnegative")?;
        check(self.viscous_damping >= 0.0, "system.viscous_damping", "must be nonnegative")?;
        if self.kind == SystemKind::SoftLimb2d {
            check(self.density > 0.0, "system.density", "must be positive")?;
            let grid = self.grid()?;
            let (hx, hy) = (grid.spacing(0), grid.spacing(1));
            check((hx - hy).abs() <= 1e-12 * hx, "system.extent", "particle spacing must match on both axes")?;
        }
        self.grid().map_err(|e| StsoError::config("system.points", e.to_string()))?;
        Ok(())
    }
}

/// Common surface of every stepper.
pub trait Dynamics: Send + Sync {
    fn kind(&self) -> SystemKind;
    fn config(&self) -> &SystemConfig;
    fn grid(&self) -> &Grid;

    /// Names of the state components, in order.
    fn channel_names(&self) -> &'static [&'static str];

    /// Number of fields the cylindrical noise (and the control force) acts on.
    fn noise_channels(&self) -> usize {
        1
    }

    fn initial_state(&self, rng: &mut dyn rand::RngCore) -> StateVector;

    /// True when the control force is the actuation field itself.
    fn control_is_actuation(&self) -> bool {
        true
    }

    /// Control force `Φ` that enters beside the noise, one field per noise channel.
    fn control_force(&self, _state: &StateVector, actuation: &Field) -> Vec<Field> {
        vec![actuation.clone()]
    }

    /// Pull `∂loss/∂Φ` back to `∂loss/∂actuation`.
    fn control_force_vjp(&self, _state: &StateVector, _actuation: &Field, upstream: &[Field]) -> Field {
        upstream[0].clone()
    }

    /// Advance by one `dt`. `actuation` is the field `m(x)ᵀφ`.
    fn step(&self, state: &StateVector, actuation: &Field, noise: &NoiseIncrement) -> Result<StateVector>;
}

pub fn build_system(cfg: &SystemConfig) -> Result<Box<dyn Dynamics>> {
    cfg.validate()?;
    Ok(match cfg.kind {
        SystemKind::Heat1d => Box::new(Heat1d::new(cfg.clone())?),
        SystemKind::Burgers1d => Box::new(Burgers1d::new(cfg.clone())?),
        SystemKind::Nagumo1d => Box::new(Nagumo1d::new(cfg.clone())?),
        SystemKind::EulerBernoulli1d => Box::new(EulerBernoulli1d::new(cfg.clone())?),
        SystemKind::Heat2d => Box::new(Heat2d::new(cfg.clone())?),
        SystemKind::SoftLimb2d => Box::new(SoftLimb2d::new(cfg.clone())?),
    })
}

/// Scalar initial field shared by the single-field systems.
pub(crate) fn scalar_initial(cfg: &SystemConfig, grid: &Grid, rng: &mut dyn rand::RngCore) -> Field {
    use std::f64::consts::PI;
    let a = grid.extent(0);
    match &cfg.initial {
        InitialCondition::Zero => Field::zeros(grid),
        InitialCondition::Sine { mode, amplitude } => {
            Field::from_fn(grid, |x| amplitude * (*mode as f64 * PI * x[0] / a).sin())
        }
        InitialCondition::Front { center } => {
            Field::from_fn(grid, |x| 1.0 / (1.0 + (-(center - x[0]) / 2f64.sqrt()).exp()))
        }
        InitialCondition::Random { amplitude } => {
            let mut f = Field::zeros(grid);
            for n in 0..grid.node_count() {
                let u: f64 = rng.random();
                if !grid.is_boundary(n) {
                    f.values_mut()[n] = amplitude * u;
                }
            }
            f
        }
    }
}

pub(crate) fn check_finite(state: &StateVector, step: usize) -> Result<()> {
    const LIMIT: f64 = 1e8;
    let ok = state.components().iter().all(|c| c.values().iter().all(|v| v.is_finite() && v.abs() < LIMIT));
    if ok {
        Ok(())
    } else {
        Err(StsoError::Diverged { step })
    }
}

pub(crate) fn expect_single(state: &StateVector, actuation: &Field, noise: &NoiseIncrement) -> Result<()> {
    if state.len() != 1 {
        return Err(StsoError::ShapeMismatch { expected: 1, got: state.len() });
    }
    expect_single_actuation(state, actuation, noise)
}

pub(crate) fn expect_single_actuation(state: &StateVector, actuation: &Field, noise: &NoiseIncrement) -> Result<()> {
    if noise.channels.len() != 1 {
        return Err(StsoError::ShapeMismatch { expected: 1, got: noise.channels.len() });
    }
    if actuation.grid() != state.grid() || noise.channels[0].grid() != state.grid() {
        return Err(StsoError::GridMismatch);
    }
    Ok(())
}
