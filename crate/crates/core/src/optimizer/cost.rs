use serde::{Deserialize, Serialize};

use crate::error::{Result, StsoError};
use crate::field::{Grid, StateVector};
use crate::systems::Trajectory;

/// Axis-aligned target region on one state component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    /// Lower corner, one entry per axis.
    pub lower: Vec<f64>,
    /// Upper corner, one entry per axis.
    pub upper: Vec<f64>,
    pub target: f64,
    /// State-cost weight κ.
    pub weight: f64,
    #[serde(default)]
    pub component: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    pub regions: Vec<Region>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Term {
    component: usize,
    node: usize,
    target: f64,
    weight: f64,
}

/// Cost spec resolved to the grid nodes it touches.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledCost {
    terms: Vec<Term>,
}

const EDGE_TOL: f64 = 1e-9;

impl CostSpec {
    pub fn compile(&self, grid: &Grid, components: usize) -> Result<CompiledCost> {
        let mut terms = Vec::new();
        for (k, r) in self.regions.iter().enumerate() {
            let path = |field: &str| format!("cost.regions[{k}].{field}");
            if r.lower.len() != grid.dim() || r.upper.len() != grid.dim() {
                return Err(StsoError::config(path("lower"), format!("expected {} coordinates", grid.dim())));
            }
            if !(r.weight >= 0.0 && r.weight.is_finite()) {
                return Err(StsoError::config(path("weight"), "must be finite and nonnegative"));
            }
            if !r.target.is_finite() {
                return Err(StsoError::config(path("target"), "must be finite"));
            }
            if r.component >= components {
                return Err(StsoError::config(path("component"), format!("state has {components} components")));
            }
            for axis in 0..grid.dim() {
                let (lo, hi) = (r.lower[axis], r.upper[axis]);
                if !(lo <= hi) || lo < -EDGE_TOL || hi > grid.extent(axis) + EDGE_TOL {
                    return Err(StsoError::config(path("upper"), "region must be a nonempty box inside the domain"));
                }
            }
            let before = terms.len();
            for node in 0..grid.node_count() {
                let x = grid.coordinate(node);
                let inside = (0..grid.dim()).all(|a| x[a] >= r.lower[a] - EDGE_TOL && x[a] <= r.upper[a] + EDGE_TOL);
                if inside {
                    terms.push(Term { component: r.component, node, target: r.target, weight: r.weight });
                }
            }
            if terms.len() == before {
                return Err(StsoError::config(path("lower"), "region contains no grid nodes"));
            }
        }
        Ok(CompiledCost { terms })
    }
}

impl CompiledCost {
    /// `Σ_x κ (z(x) − z_des)² 1_S(x)` for one state.
    pub fn state_cost(&self, state: &StateVector) -> f64 {
        self.terms
            .iter()
            .map(|t| t.weight * (state.component(t.component).values()[t.node] - t.target).powi(2))
            .sum()
    }

    /// Sum of [`Self::state_cost`] over the states reached after each step.
    pub fn trajectory_cost(&self, traj: &Trajectory) -> f64 {
        traj.states[1..].iter().map(|s| self.state_cost(s)).sum()
    }

    /// Unweighted mean squared deviation from the targets.
    pub fn target_error(&self, state: &StateVector) -> f64 {
        if self.terms.is_empty() {
            return 0.0;
        }
        let sum: f64 = self.terms.iter().map(|t| (state.component(t.component).values()[t.node] - t.target).powi(2)).sum();
        sum / self.terms.len() as f64
    }

    pub fn node_count(&self) -> usize {
        self.terms.len()
    }
}
