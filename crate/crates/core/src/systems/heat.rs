use super::{check_finite, expect_single, scalar_initial, Dynamics, SystemConfig, SystemKind};
use crate::error::Result;
use crate::field::{Field, Grid, NoiseIncrement, StateVector};
use crate::linalg::{BandLu, BandMatrix, Tridiagonal};

/// `(I − r·D₂)` on the interior nodes of a 1D Dirichlet grid, `r = ε dt / Δx²`.
pub(crate) fn dirichlet_operator(interior: usize, r: f64) -> Result<Tridiagonal> {
    let lower = vec![-r; interior];
    let upper = vec![-r; interior];
    let diag = vec![1.0 + 2.0 * r; interior];
    Tridiagonal::factor(&lower, &diag, &upper)
}

/// Stochastic heat equation on `[0, a]` with homogeneous Dirichlet boundaries.
///
/// Semi-implicit: `(I − ε dt Δ) u⁺ = u + dt Φ + dW/√ρ` on interior nodes.
#[derive(Debug, Clone)]
pub struct Heat1d {
    cfg: SystemConfig,
    grid: Grid,
    op: Tridiagonal,
}

impl Heat1d {
    pub fn new(cfg: SystemConfig) -> Result<Self> {
        let grid = cfg.grid()?;
        let h = grid.spacing(0);
        let op = dirichlet_operator(grid.points(0) - 2, cfg.epsilon * cfg.dt / (h * h))?;
        Ok(Self { cfg, grid, op })
    }
}

impl Dynamics for Heat1d {
    fn kind(&self) -> SystemKind {
        SystemKind::Heat1d
    }

    fn config(&self) -> &SystemConfig {
        &self.cfg
    }

    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn channel_names(&self) -> &'static [&'static str] {
        &["u"]
    }

    fn initial_state(&self, rng: &mut dyn rand::RngCore) -> StateVector {
        let mut u = scalar_initial(&self.cfg, &self.grid, rng);
        let n = self.grid.node_count();
        u.values_mut()[0] = 0.0;
        u.values_mut()[n - 1] = 0.0;
        StateVector::new(vec![u]).expect("single component")
    }

    fn step(&self, state: &StateVector, actuation: &Field, noise: &NoiseIncrement) -> Result<StateVector> {
        expect_single(state, actuation, noise)?;
        let (dt, s) = (self.cfg.dt, self.cfg.noise_scale());
        let u = state.component(0).values();
        let (a, dw) = (actuation.values(), noise.channels[0].values());
        let n = u.len();
        let mut rhs: Vec<f64> = (1..n - 1).map(|i| u[i] + dt * a[i] + s * dw[i]).collect();
        self.op.solve_in_place(&mut rhs);
        let mut next = vec![0.0; n];
        next[1..n - 1].copy_from_slice(&rhs);
        let out = StateVector::new(vec![Field::from_values(&self.grid, next)?])?;
        check_finite(&out, 0)?;
        Ok(out)
    }
}

/// Stochastic heat equation on a rectangle with homogeneous Dirichlet
/// boundaries; five-point Laplacian, banded LU on interior nodes.
#[derive(Debug, Clone)]
pub struct Heat2d {
    cfg: SystemConfig,
    grid: Grid,
    lu: BandLu,
}

impl Heat2d {
    pub fn new(cfg: SystemConfig) -> Result<Self> {
        let grid = cfg.grid()?;
        let lu = implicit_laplacian_2d(&grid, cfg.epsilon * cfg.dt)?.factor()?;
        Ok(Self { cfg, grid, lu })
    }

    fn interior_dims(&self) -> (usize, usize) {
        (self.grid.points(0) - 2, self.grid.points(1) - 2)
    }
}

/// `I − c·Δ_h` on interior nodes, row-major with x fastest.
pub(crate) fn implicit_laplacian_2d(grid: &Grid, c: f64) -> Result<BandMatrix> {
    let (mx, my) = (grid.points(0) - 2, grid.points(1) - 2);
    let (rx, ry) = (c / grid.spacing(0).powi(2), c / grid.spacing(1).powi(2));
    let mut m = BandMatrix::identity(mx * my, mx);
    for iy in 0..my {
        for ix in 0..mx {
            let k = iy * mx + ix;
            m.add(k, k, 2.0 * rx + 2.0 * ry);
            if ix > 0 {
                m.add(k, k - 1, -rx);
            }
            if ix + 1 < mx {
                m.add(k, k + 1, -rx);
            }
            if iy > 0 {
                m.add(k, k - mx, -ry);
            }
            if iy + 1 < my {
                m.add(k, k + mx, -ry);
            }
        }
    }
    Ok(m)
}

impl Dynamics for Heat2d {
    fn kind(&self) -> SystemKind {
        SystemKind::Heat2d
    }

    fn config(&self) -> &SystemConfig {
        &self.cfg
    }

    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn channel_names(&self) -> &'static [&'static str] {
        &["u"]
    }

    fn initial_state(&self, rng: &mut dyn rand::RngCore) -> StateVector {
        let mut u = scalar_initial(&self.cfg, &self.grid, rng);
        for n in 0..self.grid.node_count() {
            if self.grid.is_boundary(n) {
                u.values_mut()[n] = 0.0;
            }
        }
        StateVector::new(vec![u]).expect("single component")
    }

    fn step(&self, state: &StateVector, actuation: &Field, noise: &NoiseIncrement) -> Result<StateVector> {
        expect_single(state, actuation, noise)?;
        let (dt, s) = (self.cfg.dt, self.cfg.noise_scale());
        let (mx, my) = self.interior_dims();
        let u = state.component(0).values();
        let (a, dw) = (actuation.values(), noise.channels[0].values());
        let mut rhs = Vec::with_capacity(mx * my);
        for iy in 1..=my {
            for ix in 1..=mx {
                let n = self.grid.index(ix, iy);
                rhs.push(u[n] + dt * a[n] + s * dw[n]);
            }
        }
        self.lu.solve_in_place(&mut rhs);
        let mut next = vec![0.0; self.grid.node_count()];
        for iy in 1..=my {
            for ix in 1..=mx {
                next[self.grid.index(ix, iy)] = rhs[(iy - 1) * mx + (ix - 1)];
            }
        }
        let out = StateVector::new(vec![Field::from_values(&self.grid, next)?])?;
        check_finite(&out, 0)?;
        Ok(out)
    }
}
