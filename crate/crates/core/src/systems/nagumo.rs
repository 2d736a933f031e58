use super::{check_finite, expect_single, scalar_initial, Dynamics, SystemConfig, SystemKind};
use crate::error::Result;
use crate::field::{Field, Grid, NoiseIncrement, StateVector};
use crate::linalg::Tridiagonal;

/// Stochastic Nagumo equation with zero-flux (Neumann) boundaries.
///
/// Diffusion implicit with mirrored ghost nodes, cubic reaction explicit.
#[derive(Debug, Clone)]
pub struct Nagumo1d {
    cfg: SystemConfig,
    grid: Grid,
    op: Tridiagonal,
}

impl Nagumo1d {
    pub fn new(cfg: SystemConfig) -> Result<Self> {
        let grid = cfg.grid()?;
        let h = grid.spacing(0);
        let r = cfg.epsilon * cfg.dt / (h * h);
        let n = grid.points(0);
        let mut lower = vec![-r; n];
        let mut upper = vec![-r; n];
        upper[0] = -2.0 * r;
        lower[n - 1] = -2.0 * r;
        let diag = vec![1.0 + 2.0 * r; n];
        let op = Tridiagonal::factor(&lower, &diag, &upper)?;
        Ok(Self { cfg, grid, op })
    }
}

pub(crate) fn reaction(h: f64, alpha: f64) -> f64 {
    h * (1.0 - h) * (h - alpha)
}

impl Dynamics for Nagumo1d {
    fn kind(&self) -> SystemKind {
        SystemKind::Nagumo1d
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
        StateVector::new(vec![scalar_initial(&self.cfg, &self.grid, rng)]).expect("single component")
    }

    fn step(&self, state: &StateVector, actuation: &Field, noise: &NoiseIncrement) -> Result<StateVector> {
        expect_single(state, actuation, noise)?;
        let (dt, s, alpha) = (self.cfg.dt, self.cfg.noise_scale(), self.cfg.alpha);
        let h = state.component(0).values();
        let (a, dw) = (actuation.values(), noise.channels[0].values());
        let mut rhs: Vec<f64> = (0..h.len()).map(|i| h[i] + dt * reaction(h[i], alpha) + dt * a[i] + s * dw[i]).collect();
        self.op.solve_in_place(&mut rhs);
        let out = StateVector::new(vec![Field::from_values(&self.grid, rhs)?])?;
        check_finite(&out, 0)?;
        Ok(out)
    }
}
