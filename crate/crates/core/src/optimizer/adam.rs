use serde::{Deserialize, Serialize};

use crate::error::{Result, StsoError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Bias-corrected Adam moments for one parameter group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub learning_rate: f64,
    pub hyper: AdamHyper,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize, learning_rate: f64, hyper: AdamHyper) -> Self {
        Self { learning_rate, hyper, step: 0, m: vec![0.0; len], v: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Advance the moments with `grad` and return the increment to add to
    /// the parameters (descent direction).
    pub fn delta(&mut self, grad: &[f64]) -> Result<Vec<f64>> {
        if grad.len() != self.m.len() {
            return Err(StsoError::ShapeMismatch { expected: self.m.len(), got: grad.len() });
        }
        let AdamHyper { beta1, beta2, epsilon } = self.hyper;
        self.step += 1;
        let c1 = 1.0 - beta1.powf(self.step as f64);
        let c2 = 1.0 - beta2.powf(self.step as f64);
        let mut out = Vec::with_capacity(grad.len());
        for ((m, v), g) in self.m.iter_mut().zip(self.v.iter_mut()).zip(grad) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let (mh, vh) = (*m / c1, *v / c2);
            out.push(-self.learning_rate * mh / (vh.sqrt() + epsilon));
        }
        Ok(out)
    }

    pub fn apply(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        let d = self.delta(grad)?;
        for (p, d) in params.iter_mut().zip(d) {
            *p += d;
        }
        Ok(())
    }
}
