use super::heat::dirichlet_operator;
use super::{check_finite, expect_single, scalar_initial, Dynamics, SystemConfig, SystemKind};
use crate::error::Result;
use crate::field::{Field, Grid, NoiseIncrement, StateVector};
use crate::linalg::Tridiagonal;

/// Viscous stochastic Burgers equation with Dirichlet boundaries held at
/// `boundary_value`. Diffusion implicit, advection explicit (central).
#[derive(Debug, Clone)]
pub struct Burgers1d {
    cfg: SystemConfig,
    grid: Grid,
    op: Tridiagonal,
    r: f64,
}

impl Burgers1d {
    pub fn new(cfg: SystemConfig) -> Result<Self> {
        let grid = cfg.grid()?;
        let h = grid.spacing(0);
        let r = cfg.epsilon * cfg.dt / (h * h);
        let op = dirichlet_operator(grid.points(0) - 2, r)?;
        Ok(Self { cfg, grid, op, r })
    }
}

impl Dynamics for Burgers1d {
    fn kind(&self) -> SystemKind {
        SystemKind::Burgers1d
    }

    fn config(&self) -> &SystemConfig {
        &self.cfg
    }

    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn channel_names(&self) -> &'static [&'static str] {
        &["h"]
    }

    fn initial_state(&self, rng: &mut dyn rand::RngCore) -> StateVector {
        let mut h = scalar_initial(&self.cfg, &self.grid, rng);
        let n = self.grid.node_count();
        h.values_mut()[0] = self.cfg.boundary_value;
        h.values_mut()[n - 1] = self.cfg.boundary_value;
        StateVector::new(vec![h]).expect("single component")
    }

    fn step(&self, state: &StateVector, actuation: &Field, noise: &NoiseIncrement) -> Result<StateVector> {
        expect_single(state, actuation, noise)?;
        let (dt, s, g) = (self.cfg.dt, self.cfg.noise_scale(), self.cfg.boundary_value);
        let dx = self.grid.spacing(0);
        let h = state.component(0).values();
        let (a, dw) = (actuation.values(), noise.channels[0].values());
        let n = h.len();
        let mut rhs: Vec<f64> = (1..n - 1)
            .map(|i| {
                let adv = h[i] * (h[i + 1] - h[i - 1]) / (2.0 * dx);
                h[i] - dt * adv + dt * a[i] + s * dw[i]
            })
            .collect();
        rhs[0] += self.r * g;
        rhs[n - 3] += self.r * g;
        self.op.solve_in_place(&mut rhs);
        let mut next = vec![g; n];
        next[1..n - 1].copy_from_slice(&rhs);
        let out = StateVector::new(vec![Field::from_values(&self.grid, next)?])?;
        check_finite(&out, 0)?;
        Ok(out)
    }
}
