//! Spatial grids, discrete fields and cylindrical Wiener increments.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, StsoError};

/// A uniform tensor-product grid on `[0, extent]` per axis, nodes included at both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    extents: [f64; 2],
    points: [usize; 2],
}

impl Grid {
    /// Square-indexed grid with the same point count on every axis.
    pub fn new(dim: usize, extents: &[f64], points_per_axis: usize) -> Result<Self> {
        match dim {
            1 => Self::build(1, [first(extents)?, 0.0], [points_per_axis, 1]),
            2 => {
                let ext = match extents {
                    [e] => [*e, *e],
                    [x, y] => [*x, *y],
                    _ => return Err(StsoError::InvalidGrid("2D grid needs one or two extents".into())),
                };
                Self::build(2, ext, [points_per_axis, points_per_axis])
            }
            d => Err(StsoError::InvalidGrid(format!("unsupported dimension {d}"))),
        }
    }

    /// 2D grid with an independent point count per axis (e.g. the 9×3 particle lattice).
    pub fn rect(extents: [f64; 2], points: [usize; 2]) -> Result<Self> {
        Self::build(2, extents, points)
    }

    fn build(dim: usize, extents: [f64; 2], points: [usize; 2]) -> Result<Self> {
        for axis in 0..dim {
            if points[axis] < 3 {
                return Err(StsoError::InvalidGrid(format!(
                    "axis {axis} has {} points; need at least 3",
                    points[axis]
                )));
            }
            if !(extents[axis].is_finite() && extents[axis] > 0.0) {
                return Err(StsoError::InvalidGrid(format!("axis {axis} extent {} is not positive", extents[axis])));
            }
        }
        Ok(Self { dim, extents, points })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.extents[axis]
    }

    pub fn points(&self, axis: usize) -> usize {
        self.points[axis]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.extents[axis] / (self.points[axis] - 1) as f64
    }

    pub fn node_count(&self) -> usize {
        if self.dim == 1 {
            self.points[0]
        } else {
            self.points[0] * self.points[1]
        }
    }

    /// Δx in 1D, Δx·Δy in 2D.
    pub fn cell_volume(&self) -> f64 {
        if self.dim == 1 {
            self.spacing(0)
        } else {
            self.spacing(0) * self.spacing(1)
        }
    }

    /// Flat index of node `(ix, iy)`; x varies fastest.
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.points[0] + ix
    }

    pub fn node_indices(&self, node: usize) -> (usize, usize) {
        (node % self.points[0], node / self.points[0])
    }

    pub fn coordinate(&self, node: usize) -> [f64; 2] {
        let (ix, iy) = self.node_indices(node);
        let y = if self.dim == 2 { iy as f64 * self.spacing(1) } else { 0.0 };
        [ix as f64 * self.spacing(0), y]
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        let (ix, iy) = self.node_indices(node);
        let on_x = ix == 0 || ix + 1 == self.points[0];
        if self.dim == 1 {
            on_x
        } else {
            on_x || iy == 0 || iy + 1 == self.points[1]
        }
    }

    /// Trapezoid quadrature weight of a node (boundary nodes get half per axis).
    pub fn quadrature_weight(&self, node: usize) -> f64 {
        let (ix, iy) = self.node_indices(node);
        let axis_weight = |i: usize, axis: usize| {
            let h = self.spacing(axis);
            if i == 0 || i + 1 == self.points[axis] {
                0.5 * h
            } else {
                h
            }
        };
        if self.dim == 1 {
            axis_weight(ix, 0)
        } else {
            axis_weight(ix, 0) * axis_weight(iy, 1)
        }
    }

    pub fn quadrature_weights(&self) -> Vec<f64> {
        (0..self.node_count()).map(|n| self.quadrature_weight(n)).collect()
    }
}

fn first(extents: &[f64]) -> Result<f64> {
    extents.first().copied().ok_or_else(|| StsoError::InvalidGrid("missing extent".into()))
}

/// Node values of one scalar quantity on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &Grid) -> Self {
        Self { grid: *grid, values: vec![0.0; grid.node_count()] }
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        Self { grid: *grid, values: vec![value; grid.node_count()] }
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(StsoError::ShapeMismatch { expected: grid.node_count(), got: values.len() });
        }
        Ok(Self { grid: *grid, values })
    }

    pub fn from_fn(grid: &Grid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.node_count()).map(|n| f(grid.coordinate(n))).collect();
        Self { grid: *grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Discrete L2 inner product with trapezoid weights.
pub fn inner_product(f: &Field, g: &Field) -> Result<f64> {
    if f.grid != g.grid {
        return Err(StsoError::GridMismatch);
    }
    Ok(weighted_dot(&f.grid, &f.values, &g.values))
}

pub(crate) fn weighted_dot(grid: &Grid, a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(n, (x, y))| grid.quadrature_weight(n) * x * y)
        .sum()
}

/// The field that is 1 at `node` and 0 elsewhere.
pub fn one_hot_basis(grid: &Grid, node: usize) -> Result<Field> {
    let len = grid.node_count();
    if node >= len {
        return Err(StsoError::IndexOutOfRange { index: node, len });
    }
    let mut field = Field::zeros(grid);
    field.values[node] = 1.0;
    Ok(field)
}

/// Stacked fields on one grid: `(u)`, `(y, v)` or `(d_x, d_y, v_x, v_y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    components: Vec<Field>,
}

impl StateVector {
    pub fn new(components: Vec<Field>) -> Result<Self> {
        let grid = components
            .first()
            .map(|c| c.grid)
            .ok_or_else(|| StsoError::InvalidArgument("state needs at least one component".into()))?;
        if components.iter().any(|c| c.grid != grid) {
            return Err(StsoError::GridMismatch);
        }
        Ok(Self { components })
    }

    pub fn zeros(grid: &Grid, count: usize) -> Self {
        Self { components: (0..count).map(|_| Field::zeros(grid)).collect() }
    }

    pub fn grid(&self) -> &Grid {
        &self.components[0].grid
    }

    pub fn components(&self) -> &[Field] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &Field {
        &self.components[i]
    }

    pub fn component_mut(&mut self, i: usize) -> &mut Field {
        &mut self.components[i]
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Total number of scalar entries across all components.
    pub fn entry_count(&self) -> usize {
        self.components.iter().map(|c| c.values.len()).sum()
    }

    /// Components concatenated, component-major.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.entry_count());
        for c in &self.components {
            out.extend_from_slice(&c.values);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().all(Field::is_finite)
    }
}

/// One time step of cylindrical Wiener increments, one field per noise channel.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseIncrement {
    pub channels: Vec<Field>,
}

impl NoiseIncrement {
    pub fn zeros(grid: &Grid, channels: usize) -> Self {
        Self { channels: (0..channels).map(|_| Field::zeros(grid)).collect() }
    }

    pub fn negated(&self) -> Self {
        let channels = self
            .channels
            .iter()
            .map(|c| Field { grid: c.grid, values: c.values.iter().map(|v| -v).collect() })
            .collect();
        Self { channels }
    }
}

/// Per-node i.i.d. `N(0, dt / cell_volume)` draws: the grid-basis truncation of `Q = I`.
pub fn sample_cylindrical_increment<R: Rng + ?Sized>(grid: &Grid, dt: f64, rng: &mut R) -> Result<Field> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(StsoError::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let std = (dt / grid.cell_volume()).sqrt();
    let values = (0..grid.node_count())
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            std * z
        })
        .collect();
    Ok(Field { grid: *grid, values })
}

pub fn sample_noise<R: Rng + ?Sized>(grid: &Grid, dt: f64, channels: usize, rng: &mut R) -> Result<NoiseIncrement> {
    let channels = (0..channels)
        .map(|_| sample_cylindrical_increment(grid, dt, rng))
        .collect::<Result<_>>()?;
    Ok(NoiseIncrement { channels })
}
