//! Uniform evaluation grid on [0,1] per axis, boundary-normalized kernel
//! weights, and trapezoid quadrature for all marginal integrals.
//!
//! The same quadrature operator is used in statistics, solver and constraint,
//! which keeps the discrete projection identities exact.

use serde::{Deserialize, Serialize};

use crate::error::{OgamError, Result};

/// Tensor grid: `m` equally spaced nodes covering [0,1] on each of `d` axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub d: usize,
    pub m: usize,
}

impl GridSpec {
    pub fn new(d: usize, m: usize) -> Result<Self> {
        if d == 0 {
            return Err(OgamError::Config("axis count d must be >= 1".into()));
        }
        if m < 2 {
            return Err(OgamError::Config("grid must have at least 2 nodes".into()));
        }
        Ok(GridSpec { d, m })
    }

    /// Node spacing 1/(m-1).
    pub fn step(&self) -> f64 {
        1.0 / (self.m as f64 - 1.0)
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.step()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.m).map(|i| self.node(i)).collect()
    }

    /// Trapezoid weight of axis node `i`; weights sum to 1 per axis.
    pub fn quad_weight(&self, i: usize) -> f64 {
        let h = self.step();
        if i == 0 || i == self.m - 1 {
            0.5 * h
        } else {
            h
        }
    }

    /// Number of tensor grid points, m^d.
    pub fn len(&self) -> usize {
        self.m.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Row-major stride of axis `j`.
    pub fn stride(&self, j: usize) -> usize {
        self.m.pow((self.d - 1 - j) as u32)
    }

    /// Axis-`j` subindex of flat point index `idx`.
    pub fn axis_index(&self, idx: usize, j: usize) -> usize {
        (idx / self.stride(j)) % self.m
    }

    /// Product of all per-axis trapezoid weights at flat index `idx`.
    pub fn quad_product(&self, idx: usize) -> f64 {
        let mut w = 1.0;
        for j in 0..self.d {
            w *= self.quad_weight(self.axis_index(idx, j));
        }
        w
    }

    /// Full-grid quadrature: integral of a scalar field over [0,1]^d.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        values
            .iter()
            .enumerate()
            .map(|(idx, v)| v * self.quad_product(idx))
            .sum()
    }

    /// Integrate out every axis except `axis`, yielding a function of that
    /// axis on its m nodes (the discrete version of ∫ · dx_{-j}).
    pub fn marginal(&self, values: &[f64], axis: usize) -> Result<Vec<f64>> {
        if axis >= self.d {
            return Err(OgamError::ShapeMismatch(format!(
                "axis {axis} out of range for d={}",
                self.d
            )));
        }
        debug_assert_eq!(values.len(), self.len());
        let mut out = vec![0.0; self.m];
        for (idx, v) in values.iter().enumerate() {
            let ia = self.axis_index(idx, axis);
            out[ia] += v * self.quad_product(idx) / self.quad_weight(ia);
        }
        Ok(out)
    }

    /// Integrate out every axis except the ordered pair (`aj`, `al`), yielding
    /// an m x m function (row index on axis `aj`).
    pub fn marginal_pair(&self, values: &[f64], aj: usize, al: usize) -> Result<Vec<f64>> {
        if aj >= self.d || al >= self.d || aj == al {
            return Err(OgamError::ShapeMismatch(format!(
                "bad axis pair ({aj},{al}) for d={}",
                self.d
            )));
        }
        debug_assert_eq!(values.len(), self.len());
        let mut out = vec![0.0; self.m * self.m];
        for (idx, v) in values.iter().enumerate() {
            let ij = self.axis_index(idx, aj);
            let il = self.axis_index(idx, al);
            out[ij * self.m + il] +=
                v * self.quad_product(idx) / (self.quad_weight(ij) * self.quad_weight(il));
        }
        Ok(out)
    }

    /// Axis quadrature of a univariate grid function.
    pub fn integrate_axis(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.m);
        values
            .iter()
            .enumerate()
            .map(|(i, v)| v * self.quad_weight(i))
            .sum()
    }
}

/// Kernel shape with its bandwidth-selection constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelSpec {
    /// 0.75 (1 - u^2) on [-1, 1].
    Epanechnikov,
}

impl KernelSpec {
    pub fn from_name(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "epanechnikov" => Ok(KernelSpec::Epanechnikov),
            other => Err(OgamError::Config(format!("unknown kernel '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        "epanechnikov"
    }

    pub fn eval(&self, u: f64) -> f64 {
        match self {
            KernelSpec::Epanechnikov => {
                if u.abs() >= 1.0 {
                    0.0
                } else {
                    0.75 * (1.0 - u * u)
                }
            }
        }
    }

    /// Roughness R(K) = ∫ K(u)^2 du.
    pub fn roughness(&self) -> f64 {
        match self {
            KernelSpec::Epanechnikov => 0.6,
        }
    }

    /// Second moment mu_2(K) = ∫ u^2 K(u) du.
    pub fn second_moment(&self) -> f64 {
        match self {
            KernelSpec::Epanechnikov => 0.2,
        }
    }

    /// Plug-in constant C(K) = {R(K) / mu_2(K)^2}^{1/5}.
    pub fn plugin_constant(&self) -> f64 {
        (self.roughness() / self.second_moment().powi(2)).powf(0.2)
    }
}

/// Boundary-normalized kernel weights of one observation on one axis.
///
/// Returns the grid function `x -> K((obs - x)/h) / h`, renormalized so its
/// trapezoid integral over [0,1] is exactly 1 (mass truncated at the
/// boundary is put back). If the support covers no node at all (possible
/// only for sub-grid bandwidths), the zero vector is returned and the
/// observation drops out of this axis.
pub fn kernel_weights(grid: &GridSpec, kernel: KernelSpec, obs: f64, h: f64) -> Result<Vec<f64>> {
    if h.is_nan() || h <= 0.0 || h > 1.0 {
        return Err(OgamError::InvalidBandwidth(h));
    }
    if !(0.0..=1.0).contains(&obs) {
        return Err(OgamError::InvalidInput(format!(
            "covariate {obs} outside [0,1]"
        )));
    }
    let mut w: Vec<f64> = (0..grid.m)
        .map(|i| kernel.eval((obs - grid.node(i)) / h) / h)
        .collect();
    let mass = grid.integrate_axis(&w);
    if mass > 0.0 {
        for v in &mut w {
            *v /= mass;
        }
    } else {
        w.fill(0.0);
    }
    Ok(w)
}
