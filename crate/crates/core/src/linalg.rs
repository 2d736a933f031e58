//! Direct solvers for the banded systems of the implicit steps.

use crate::error::{Result, StsoError};

/// Pre-factored tridiagonal matrix (Thomas algorithm, no pivoting).
#[derive(Debug, Clone)]
pub struct Tridiagonal {
    lower: Vec<f64>,
    upper_mod: Vec<f64>,
    denom: Vec<f64>,
}

impl Tridiagonal {
    /// `lower[i]` multiplies `x[i-1]` in row `i` (ignored for row 0), `upper[i]` multiplies `x[i+1]`.
    pub fn factor(lower: &[f64], diag: &[f64], upper: &[f64]) -> Result<Self> {
        let n = diag.len();
        if lower.len() != n || upper.len() != n {
            return Err(StsoError::ShapeMismatch { expected: n, got: lower.len().min(upper.len()) });
        }
        let mut upper_mod = vec![0.0; n];
        let mut denom = vec![0.0; n];
        for i in 0..n {
            let d = if i == 0 { diag[0] } else { diag[i] - lower[i] * upper_mod[i - 1] };
            if d == 0.0 || !d.is_finite() {
                return Err(StsoError::SingularSolve(i));
            }
            denom[i] = d;
            upper_mod[i] = upper[i] / d;
        }
        Ok(Self { lower: lower.to_vec(), upper_mod, denom })
    }

    pub fn len(&self) -> usize {
        self.denom.len()
    }

    pub fn is_empty(&self) -> bool {
        self.denom.is_empty()
    }

    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = self.len();
        debug_assert_eq!(rhs.len(), n);
        rhs[0] /= self.denom[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.lower[i] * rhs[i - 1]) / self.denom[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.upper_mod[i] * rhs[i + 1];
        }
    }
}

/// Square banded matrix with `bw` sub- and super-diagonals, stored row-major as
/// `rows × (2·bw + 1)`; entry `(i, j)` lives at `i·width + (j + bw − i)`.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self { n, bw, data: vec![0.0; n * (2 * bw + 1)] }
    }

    pub fn identity(n: usize, bw: usize) -> Self {
        let mut m = Self::zeros(n, bw);
        for i in 0..n {
            m.add(i, i, 1.0);
        }
        m
    }

    pub fn size(&self) -> usize {
        self.n
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.n || j >= self.n || i.abs_diff(j) > self.bw {
            return None;
        }
        Some(i * (2 * self.bw + 1) + (j + self.bw - i))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.data[s])
    }

    /// Panics if `(i, j)` falls outside the band.
    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        let s = self.slot(i, j).expect("entry outside band");
        self.data[s] += value;
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.bw);
                let hi = (i + self.bw).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    /// Product `self · other` of two banded matrices (band widths add).
    pub fn matmul(&self, other: &BandMatrix) -> BandMatrix {
        let bw = self.bw + other.bw;
        let mut out = BandMatrix::zeros(self.n, bw);
        for i in 0..self.n {
            for k in i.saturating_sub(self.bw)..=(i + self.bw).min(self.n - 1) {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in k.saturating_sub(other.bw)..=(k + other.bw).min(self.n - 1) {
                    out.add(i, j, a * other.get(k, j));
                }
            }
        }
        out
    }

    /// LU factorization without pivoting; fine for the diagonally dominant / SPD
    /// operators produced by the implicit steps.
    pub fn factor(&self) -> Result<BandLu> {
        let mut lu = self.clone();
        let (n, bw) = (self.n, self.bw);
        for k in 0..n {
            let pivot = lu.get(k, k);
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(StsoError::SingularSolve(k));
            }
            for i in k + 1..=(k + bw).min(n - 1) {
                let factor = lu.get(i, k) / pivot;
                if factor == 0.0 {
                    continue;
                }
                let s = lu.slot(i, k).unwrap();
                lu.data[s] = factor;
                for j in k + 1..=(k + bw).min(n - 1) {
                    let ukj = lu.get(k, j);
                    if ukj != 0.0 {
                        lu.add(i, j, -factor * ukj);
                    }
                }
            }
        }
        Ok(BandLu { lu })
    }
}

#[derive(Debug, Clone)]
pub struct BandLu {
    lu: BandMatrix,
}

impl BandLu {
    pub fn size(&self) -> usize {
        self.lu.n
    }

    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let (n, bw) = (self.lu.n, self.lu.bw);
        debug_assert_eq!(rhs.len(), n);
        for i in 0..n {
            let mut acc = rhs[i];
            for j in i.saturating_sub(bw)..i {
                acc -= self.lu.get(i, j) * rhs[j];
            }
            rhs[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = rhs[i];
            for j in i + 1..=(i + bw).min(n - 1) {
                acc -= self.lu.get(i, j) * rhs[j];
            }
            rhs[i] = acc / self.lu.get(i, i);
        }
    }
}
