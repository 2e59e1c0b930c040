//! The additive estimate: intercept, component functions sampled on the axis
//! grid, and their local-polynomial Taylor coefficients.
//!
//! Coefficients are stored unscaled (`c_{j,1} = beta_j'`, `c_{j,2} =
//! beta_j''/2`), which makes the local-linear extrapolation
//! `beta(u, x) = beta(x) + sum_j sum_a c_{j,a}(x_j) (u_j - x_j)^a`
//! bandwidth-free. The h-scaled derivative `beta_{1j} = h_j beta_j'` used in
//! reports is recovered through the bandwidth recorded on the estimate.

use serde::{Deserialize, Serialize};

use crate::field::VecField;
use crate::grid::GridSpec;

/// Additive fit on the tensor grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditiveEstimate {
    /// Intercept beta_0.
    pub intercept: f64,
    /// Component values beta_j at the axis nodes; `values[j][i]`.
    pub values: Vec<Vec<f64>>,
    /// Unscaled Taylor coefficients; `coeffs[j][a-1][i]` holds c_{j,a}(node i).
    pub coeffs: Vec<Vec<Vec<f64>>>,
    /// Bandwidth the estimate was produced at (one entry per axis).
    pub bandwidth: Vec<f64>,
}

impl AdditiveEstimate {
    pub fn zero(grid: &GridSpec, degree: usize, bandwidth: Vec<f64>) -> Self {
        AdditiveEstimate {
            intercept: 0.0,
            values: vec![vec![0.0; grid.m]; grid.d],
            coeffs: vec![vec![vec![0.0; grid.m]; degree]; grid.d],
            bandwidth,
        }
    }

    /// Local-polynomial degree (1 = linear, 2 = quadratic).
    pub fn degree(&self) -> usize {
        self.coeffs.first().map_or(1, |c| c.len())
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.values.len(), self.values[0].len())
    }

    /// Length of the per-point representation vector, 1 + degree * d.
    pub fn rep_dim(&self) -> usize {
        1 + self.degree() * self.values.len()
    }

    /// Representation slot of coefficient (j, a); slot 0 is the value entry.
    pub fn slot(&self, j: usize, a: usize) -> usize {
        1 + j * self.degree() + (a - 1)
    }

    /// Additive value beta(x) at a flat grid index.
    pub fn value_at(&self, grid: &GridSpec, idx: usize) -> f64 {
        let mut v = self.intercept;
        for (j, vals) in self.values.iter().enumerate() {
            v += vals[grid.axis_index(idx, j)];
        }
        v
    }

    /// beta(x) over the whole grid.
    pub fn value_field(&self, grid: &GridSpec) -> Vec<f64> {
        (0..grid.len()).map(|idx| self.value_at(grid, idx)).collect()
    }

    /// Per-point representation vector (beta(x), c_{j,a}(x_j), ...), the
    /// object every stored statistic is contracted against.
    pub fn rep_field(&self, grid: &GridSpec) -> VecField {
        let dim = self.rep_dim();
        let degree = self.degree();
        let mut out = VecField::zeros(grid.len(), dim);
        for idx in 0..grid.len() {
            *out.at_mut(idx, 0) = self.value_at(grid, idx);
            for j in 0..grid.d {
                let ia = grid.axis_index(idx, j);
                for a in 1..=degree {
                    *out.at_mut(idx, 1 + j * degree + (a - 1)) = self.coeffs[j][a - 1][ia];
                }
            }
        }
        out
    }

    /// Local-polynomial extrapolation beta(u, x) from grid point `idx` to an
    /// observation `u` (slice of length d).
    pub fn extrapolate(&self, grid: &GridSpec, idx: usize, u: &[f64]) -> f64 {
        let mut v = self.value_at(grid, idx);
        for j in 0..grid.d {
            let ia = grid.axis_index(idx, j);
            let t = u[j] - grid.node(ia);
            let mut tp = 1.0;
            for a in 0..self.degree() {
                tp *= t;
                v += self.coeffs[j][a][ia] * tp;
            }
        }
        v
    }

    /// h-scaled derivative sample beta_{1j}(node i) = h_j beta_j'(node i).
    pub fn scaled_derivative(&self, j: usize, i: usize) -> f64 {
        self.bandwidth[j] * self.coeffs[j][0][i]
    }

    /// Sup-norm distance to another estimate over intercept, component values
    /// and h-scaled coefficient samples.
    pub fn sup_distance(&self, other: &AdditiveEstimate) -> f64 {
        let mut m = (self.intercept - other.intercept).abs();
        for j in 0..self.values.len() {
            for i in 0..self.values[j].len() {
                m = m.max((self.values[j][i] - other.values[j][i]).abs());
            }
            for a in 0..self.degree() {
                let ha = self.bandwidth[j].powi(a as i32 + 1);
                for i in 0..self.coeffs[j][a].len() {
                    m = m.max(ha * (self.coeffs[j][a][i] - other.coeffs[j][a][i]).abs());
                }
            }
        }
        m
    }

    pub fn all_finite(&self) -> bool {
        self.intercept.is_finite()
            && self.values.iter().flatten().all(|v| v.is_finite())
            && self
                .coeffs
                .iter()
                .flatten()
                .flatten()
                .all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extrapolation_matches_manual_expansion() {
        let grid = GridSpec::new(2, 5).unwrap();
        let mut est = AdditiveEstimate::zero(&grid, 2, vec![0.2, 0.2]);
        est.intercept = 1.0;
        for i in 0..5 {
            let x = grid.node(i);
            est.values[0][i] = x;
            est.values[1][i] = 2.0 * x;
            est.coeffs[0][0][i] = 1.0; // beta_1' = 1
            est.coeffs[1][0][i] = 2.0;
            est.coeffs[0][1][i] = 0.5;
            est.coeffs[1][1][i] = 0.0;
        }
        // grid point (0.25, 0.5): beta(x) = 1 + 0.25 + 1.0 = 2.25
        let idx = grid.stride(0) + 2 * grid.stride(1);
        assert!((est.value_at(&grid, idx) - 2.25).abs() < 1e-15);
        let u = [0.3, 0.45];
        let expect = 2.25 + (1.0 * 0.05 + 0.5 * 0.05 * 0.05) + (2.0 * -0.05);
        assert!((est.extrapolate(&grid, idx, &u) - expect).abs() < 1e-14);
        let rep = est.rep_field(&grid);
        assert_eq!(rep.dim, 5);
        assert!((rep.at(idx, 0) - 2.25).abs() < 1e-15);
        assert!((rep.at(idx, est.slot(0, 2)) - 0.5).abs() < 1e-15);
    }
}
