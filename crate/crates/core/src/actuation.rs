//! Gaussian actuator footprints and placement on the grid.
//!
//! Each actuator `i` has a continuous virtual position `vᵢ`, the grid node
//! `x_{p,i}` it is snapped to, and a width `σᵢ`. The footprint is the unit-peak
//! bump `mᵢ(ξ) = exp(−‖ξ − x_{p,i}‖² / (2σᵢ²))`. Gradients with respect to the
//! placement are taken through this closed form at the snapped position and
//! applied to `v`, so sub-spacing steps keep accumulating.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, StsoError};
use crate::field::{weighted_dot, Field, Grid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActuatorDesign {
    /// Continuous placement variables, one `[x, y]` per actuator (`y = 0` in 1D).
    pub virtual_positions: Vec<[f64; 2]>,
    /// Grid nodes actually applied to the system.
    pub positions: Vec<[f64; 2]>,
    pub widths: Vec<f64>,
}

impl ActuatorDesign {
    /// Build from virtual positions; the applied positions are their snaps.
    pub fn new(grid: &Grid, virtual_positions: Vec<[f64; 2]>, widths: Vec<f64>) -> Result<Self> {
        if virtual_positions.len() != widths.len() {
            return Err(StsoError::ShapeMismatch { expected: virtual_positions.len(), got: widths.len() });
        }
        if let Some(w) = widths.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(StsoError::InvalidArgument(format!("actuator width must be positive, got {w}")));
        }
        let virtual_positions: Vec<_> = virtual_positions.iter().map(|v| clamp_to_domain(grid, *v)).collect();
        let positions = virtual_positions.iter().map(|v| snap_to_grid(grid, *v)).collect();
        Ok(Self { virtual_positions, positions, widths })
    }

    /// Uniform draws inside `ranges` (one `[lo, hi]` per axis).
    pub fn random<R: Rng + ?Sized>(
        grid: &Grid,
        count: usize,
        ranges: &[[f64; 2]],
        width: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if ranges.len() != grid.dim() {
            return Err(StsoError::ShapeMismatch { expected: grid.dim(), got: ranges.len() });
        }
        let v = (0..count)
            .map(|_| {
                let mut p = [0.0; 2];
                for (axis, [lo, hi]) in ranges.iter().enumerate() {
                    let u: f64 = rng.random();
                    p[axis] = lo + (hi - lo) * u;
                }
                p
            })
            .collect();
        Self::new(grid, v, vec![width; count])
    }

    pub fn count(&self) -> usize {
        self.widths.len()
    }

    /// Apply gradient-step increments to `v` and the widths, then re-snap.
    /// Widths are clipped below at half the smallest grid spacing.
    pub fn update(&mut self, grid: &Grid, dv: &[[f64; 2]], dwidth: &[f64]) {
        let min_width = min_width(grid);
        for i in 0..self.count() {
            let mut v = self.virtual_positions[i];
            for axis in 0..grid.dim() {
                v[axis] += dv[i][axis];
            }
            self.virtual_positions[i] = clamp_to_domain(grid, v);
            self.positions[i] = snap_to_grid(grid, self.virtual_positions[i]);
            self.widths[i] = (self.widths[i] + dwidth[i]).max(min_width);
        }
    }

    /// Positions trimmed to the grid dimension, for reports.
    pub fn positions_for_report(&self, dim: usize) -> Vec<Vec<f64>> {
        self.positions.iter().map(|p| p[..dim].to_vec()).collect()
    }
}

pub fn min_width(grid: &Grid) -> f64 {
    (0..grid.dim()).map(|a| grid.spacing(a)).fold(f64::INFINITY, f64::min) / 2.0
}

pub fn clamp_to_domain(grid: &Grid, v: [f64; 2]) -> [f64; 2] {
    let mut out = [0.0; 2];
    for axis in 0..grid.dim() {
        out[axis] = v[axis].clamp(0.0, grid.extent(axis));
    }
    out
}

/// Nearest grid node per axis after clamping into the domain; ties round up.
pub fn snap_to_grid(grid: &Grid, v: [f64; 2]) -> [f64; 2] {
    let v = clamp_to_domain(grid, v);
    let mut out = [0.0; 2];
    for axis in 0..grid.dim() {
        let h = grid.spacing(axis);
        let s = v[axis] / h;
        let base = s.floor();
        // Absorb representation error so that e.g. 0.25 / 0.1 counts as a tie.
        let idx = if s - base >= 0.5 - 1e-9 { base + 1.0 } else { base };
        let idx = idx.clamp(0.0, (grid.points(axis) - 1) as f64);
        out[axis] = idx * h;
    }
    out
}

/// One footprint per actuator, evaluated at every node.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceMatrix {
    rows: Vec<Field>,
}

pub fn influence(design: &ActuatorDesign, grid: &Grid) -> InfluenceMatrix {
    let rows = design
        .positions
        .iter()
        .zip(&design.widths)
        .map(|(p, s)| Field::from_fn(grid, |x| (-dist2(grid, x, *p) / (2.0 * s * s)).exp()))
        .collect();
    InfluenceMatrix { rows }
}

fn dist2(grid: &Grid, a: [f64; 2], b: [f64; 2]) -> f64 {
    (0..grid.dim()).map(|k| (a[k] - b[k]).powi(2)).sum()
}

impl InfluenceMatrix {
    pub fn from_rows(rows: Vec<Field>) -> Result<Self> {
        if let Some(first) = rows.first() {
            if rows.iter().any(|r| r.grid() != first.grid()) {
                return Err(StsoError::GridMismatch);
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[Field] {
        &self.rows
    }

    pub fn count(&self) -> usize {
        self.rows.len()
    }

    /// `Σᵢ uᵢ mᵢ`.
    pub fn apply(&self, u: &[f64]) -> Result<Field> {
        if u.len() != self.rows.len() {
            return Err(StsoError::ShapeMismatch { expected: self.rows.len(), got: u.len() });
        }
        let grid = *self.rows.first().ok_or_else(|| StsoError::InvalidArgument("no actuators".into()))?.grid();
        let mut out = vec![0.0; grid.node_count()];
        for (row, &ui) in self.rows.iter().zip(u) {
            for (o, m) in out.iter_mut().zip(row.values()) {
                *o += ui * m;
            }
        }
        Field::from_values(&grid, out)
    }

    /// `⟨mᵢ, mⱼ⟩` under the grid quadrature.
    pub fn gram(&self) -> Vec<Vec<f64>> {
        let n = self.rows.len();
        let mut g = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..=i {
                let v = weighted_dot(self.rows[i].grid(), self.rows[i].values(), self.rows[j].values());
                g[i][j] = v;
                g[j][i] = v;
            }
        }
        g
    }
}

/// `Σ_ξ ∂L/∂mᵢ(ξ) · mᵢ(ξ)(ξ − x_{p,i})/σᵢ²`, one `[x, y]` per actuator.
pub fn placement_gradient(upstream: &[Field], design: &ActuatorDesign, grid: &Grid) -> Result<Vec<[f64; 2]>> {
    check_upstream(upstream, design, grid)?;
    let infl = influence(design, grid);
    Ok((0..design.count())
        .map(|i| {
            let (p, s2) = (design.positions[i], design.widths[i].powi(2));
            let mut g = [0.0; 2];
            for n in 0..grid.node_count() {
                let x = grid.coordinate(n);
                let c = upstream[i].values()[n] * infl.rows[i].values()[n] / s2;
                for axis in 0..grid.dim() {
                    g[axis] += c * (x[axis] - p[axis]);
                }
            }
            g
        })
        .collect())
}

/// `Σ_ξ ∂L/∂mᵢ(ξ) · mᵢ(ξ)‖ξ − x_{p,i}‖²/σᵢ³`.
pub fn width_gradient(upstream: &[Field], design: &ActuatorDesign, grid: &Grid) -> Result<Vec<f64>> {
    check_upstream(upstream, design, grid)?;
    let infl = influence(design, grid);
    Ok((0..design.count())
        .map(|i| {
            let (p, s3) = (design.positions[i], design.widths[i].powi(3));
            (0..grid.node_count())
                .map(|n| upstream[i].values()[n] * infl.rows[i].values()[n] * dist2(grid, grid.coordinate(n), p) / s3)
                .sum()
        })
        .collect())
}

fn check_upstream(upstream: &[Field], design: &ActuatorDesign, grid: &Grid) -> Result<()> {
    if upstream.len() != design.count() {
        return Err(StsoError::ShapeMismatch { expected: design.count(), got: upstream.len() });
    }
    if upstream.iter().any(|f| f.grid() != grid) {
        return Err(StsoError::GridMismatch);
    }
    Ok(())
}
