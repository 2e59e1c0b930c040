//! Dense grid fields: scalars, vectors and square matrices attached to every
//! tensor grid point. These carry the aggregated statistics, so the only
//! operations they need are construction, convex merging and contraction.

use serde::{Deserialize, Serialize};

use crate::error::{OgamError, Result};

/// A (dim x dim) matrix at every grid point, row-major per point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatField {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl MatField {
    pub fn zeros(npoints: usize, dim: usize) -> Self {
        MatField {
            dim,
            data: vec![0.0; npoints * dim * dim],
        }
    }

    pub fn npoints(&self) -> usize {
        self.data.len() / (self.dim * self.dim)
    }

    #[inline]
    pub fn at(&self, idx: usize, r: usize, c: usize) -> f64 {
        self.data[(idx * self.dim + r) * self.dim + c]
    }

    #[inline]
    pub fn at_mut(&mut self, idx: usize, r: usize, c: usize) -> &mut f64 {
        &mut self.data[(idx * self.dim + r) * self.dim + c]
    }

    /// Slice holding the matrix at one grid point.
    #[inline]
    pub fn point(&self, idx: usize) -> &[f64] {
        &self.data[idx * self.dim * self.dim..(idx + 1) * self.dim * self.dim]
    }

    /// Extract one (r, c) entry as a scalar field.
    pub fn entry_field(&self, r: usize, c: usize) -> Vec<f64> {
        (0..self.npoints()).map(|i| self.at(i, r, c)).collect()
    }

    /// Pointwise matrix-vector product against a vector field.
    pub fn matvec(&self, v: &VecField) -> VecField {
        debug_assert_eq!(self.dim, v.dim);
        let n = self.npoints();
        let mut out = VecField::zeros(n, self.dim);
        for idx in 0..n {
            for r in 0..self.dim {
                let mut acc = 0.0;
                for c in 0..self.dim {
                    acc += self.at(idx, r, c) * v.at(idx, c);
                }
                *out.at_mut(idx, r) = acc;
            }
        }
        out
    }

    /// Pointwise quadratic form v' M v as a scalar field.
    pub fn quadratic_form(&self, v: &VecField) -> Vec<f64> {
        let mv = self.matvec(v);
        (0..self.npoints())
            .map(|idx| (0..self.dim).map(|r| v.at(idx, r) * mv.at(idx, r)).sum())
            .collect()
    }
}

/// A dim-vector at every grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VecField {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl VecField {
    pub fn zeros(npoints: usize, dim: usize) -> Self {
        VecField {
            dim,
            data: vec![0.0; npoints * dim],
        }
    }

    pub fn npoints(&self) -> usize {
        self.data.len() / self.dim
    }

    #[inline]
    pub fn at(&self, idx: usize, r: usize) -> f64 {
        self.data[idx * self.dim + r]
    }

    #[inline]
    pub fn at_mut(&mut self, idx: usize, r: usize) -> &mut f64 {
        &mut self.data[idx * self.dim + r]
    }

    pub fn entry_field(&self, r: usize) -> Vec<f64> {
        (0..self.npoints()).map(|i| self.at(i, r)).collect()
    }

    /// Pointwise dot product against another vector field.
    pub fn dot(&self, other: &VecField) -> Vec<f64> {
        debug_assert_eq!(self.dim, other.dim);
        (0..self.npoints())
            .map(|idx| {
                (0..self.dim)
                    .map(|r| self.at(idx, r) * other.at(idx, r))
                    .sum()
            })
            .collect()
    }
}

/// In place: `dst = (1 - w) * dst + w * src`, the single merge rule every
/// stored statistic follows.
pub fn merge_into(dst: &mut [f64], src: &[f64], w: f64) -> Result<()> {
    if dst.len() != src.len() {
        return Err(OgamError::ShapeMismatch(format!(
            "merge of {} into {} values",
            src.len(),
            dst.len()
        )));
    }
    let keep = 1.0 - w;
    for (d, s) in dst.iter_mut().zip(src) {
        *d = keep * *d + w * *s;
    }
    Ok(())
}
