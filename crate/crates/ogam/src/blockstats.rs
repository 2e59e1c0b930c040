//! Per-block statistics: the grid-valued matrices U, V, W, S_j built from one
//! data block at one bandwidth, and the contracted sub-sufficient statistics
//! that the store aggregates across blocks.

use serde::{Deserialize, Serialize};

use crate::error::{OgamError, Result};
use crate::estimate::AdditiveEstimate;
use crate::family::Family;
use crate::field::{MatField, VecField};
use crate::grid::{kernel_weights, GridSpec, KernelSpec};

/// One block of observations: covariates in [0,1]^d plus responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataBlock {
    /// 1-based block index in the stream.
    pub index: usize,
    /// Row-major covariates, `x[i * d + j]`.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub d: usize,
}

impl DataBlock {
    pub fn new(index: usize, d: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let block = DataBlock { index, x, y, d };
        block.check_shape()?;
        Ok(block)
    }

    fn check_shape(&self) -> Result<()> {
        if self.y.is_empty() || self.x.len() != self.y.len() * self.d {
            return Err(OgamError::ShapeMismatch(format!(
                "block {}: {} covariate values for {} responses (d={})",
                self.index,
                self.x.len(),
                self.y.len(),
                self.d
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    #[inline]
    pub fn xv(&self, i: usize, j: usize) -> f64 {
        self.x[i * self.d + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    /// Covariate-range and family-response validation.
    pub fn validate(&self, family: Family) -> Result<()> {
        self.check_shape()?;
        for i in 0..self.len() {
            for j in 0..self.d {
                let v = self.xv(i, j);
                if !(0.0..=1.0).contains(&v) {
                    return Err(OgamError::InvalidInput(format!(
                        "block {}, row {}: covariate x{} = {} outside [0,1]",
                        self.index,
                        i + 1,
                        j + 1,
                        v
                    )));
                }
            }
            family.validate_response(self.y[i])?;
        }
        Ok(())
    }

    /// Concatenate blocks into a single pooled block (for the batch fit).
    pub fn pooled(blocks: &[DataBlock]) -> Result<DataBlock> {
        let d = blocks
            .first()
            .ok_or_else(|| OgamError::InvalidInput("no blocks to pool".into()))?
            .d;
        let mut x = Vec::new();
        let mut y = Vec::new();
        for b in blocks {
            if b.d != d {
                return Err(OgamError::ShapeMismatch("inconsistent block dimensions".into()));
            }
            x.extend_from_slice(&b.x);
            y.extend_from_slice(&b.y);
        }
        DataBlock::new(1, d, x, y)
    }
}

/// The raw matrix fields of one block at one bandwidth.
#[derive(Debug, Clone)]
pub struct BlockMatrices {
    pub u: MatField,
    pub v: MatField,
    pub w: MatField,
    /// q3-weighted moment matrices, one per (component, order) pair,
    /// `s[j * degree + (a-1)]`.
    pub s: Vec<MatField>,
    /// Per-block normalized kernel mass (density estimate contribution).
    pub density: Vec<f64>,
    pub bandwidth: Vec<f64>,
    pub degree: usize,
}

/// Sub-sufficient statistics of one block: the matrices above plus their
/// contractions against the evaluation estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubStatistics {
    pub u: MatField,
    pub v: MatField,
    pub w: MatField,
    pub s: Vec<MatField>,
    pub vb: VecField,
    pub wb: VecField,
    pub bwb: Vec<f64>,
    pub sb: Vec<VecField>,
    pub bsb: Vec<Vec<f64>>,
    pub density: Vec<f64>,
    /// Candidate bandwidth the statistics were built at.
    pub eta: Vec<f64>,
    pub degree: usize,
}

/// Shared context for building block statistics.
#[derive(Debug, Clone, Copy)]
pub struct StatContext {
    pub grid: GridSpec,
    pub kernel: KernelSpec,
    pub family: Family,
    pub degree: usize,
}

impl StatContext {
    pub fn rep_dim(&self) -> usize {
        1 + self.degree * self.grid.d
    }

    fn axis_weight_table(&self, block: &DataBlock, h: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mut table = Vec::with_capacity(block.len() * self.grid.d);
        for i in 0..block.len() {
            for j in 0..self.grid.d {
                table.push(kernel_weights(&self.grid, self.kernel, block.xv(i, j), h[j])?);
            }
        }
        Ok(table)
    }

    /// The per-observation weights (u, nu, omega) = (q1, q2, q3) * K_h at one
    /// grid point.
    pub fn observation_weights(
        &self,
        block: &DataBlock,
        beta: &AdditiveEstimate,
        h: &[f64],
        idx: usize,
    ) -> Result<Vec<(f64, f64, f64)>> {
        let table = self.axis_weight_table(block, h)?;
        let d = self.grid.d;
        let mut out = Vec::with_capacity(block.len());
        for i in 0..block.len() {
            let mut kw = 1.0;
            for j in 0..d {
                kw *= table[i * d + j][self.grid.axis_index(idx, j)];
            }
            if kw == 0.0 {
                out.push((0.0, 0.0, 0.0));
                continue;
            }
            let eta_lin = beta.extrapolate(&self.grid, idx, block.row(i));
            let (q1, q2, q3) = self.family.quasi_derivatives(eta_lin, block.y[i])?;
            out.push((q1 * kw, q2 * kw, q3 * kw));
        }
        Ok(out)
    }

    /// Build the full U, V, W, S_j matrix fields of a block at bandwidth `h`,
    /// expanded at `beta`.
    pub fn build_block_matrices(
        &self,
        block: &DataBlock,
        beta: &AdditiveEstimate,
        h: &[f64],
    ) -> Result<BlockMatrices> {
        let accum = self.accumulate(block, beta, h, BuildMode::Full)?;
        Ok(BlockMatrices {
            u: accum.u.expect("full build has U"),
            v: accum.v,
            w: accum.w.expect("full build has W"),
            s: accum.s,
            density: accum.density,
            bandwidth: h.to_vec(),
            degree: self.degree,
        })
    }

    /// Build only the pieces the outer iteration needs from the current
    /// block: the first column of U and the full V.
    pub fn build_current_block(
        &self,
        block: &DataBlock,
        beta: &AdditiveEstimate,
        h: &[f64],
    ) -> Result<CurrentBlock> {
        let accum = self.accumulate(block, beta, h, BuildMode::Lean)?;
        Ok(CurrentBlock {
            u_col: accum.u_col,
            v: accum.v,
        })
    }

    /// Build the nine grid statistics of one block at candidate bandwidth
    /// `eta`, contracted against `beta`.
    pub fn build_sub_statistics(
        &self,
        block: &DataBlock,
        beta: &AdditiveEstimate,
        eta: &[f64],
    ) -> Result<SubStatistics> {
        let m = self.build_block_matrices(block, beta, eta)?;
        Ok(self.contract(m, beta))
    }

    /// Contract prebuilt block matrices against `beta` to form the stored
    /// sub-sufficient statistics.
    pub fn contract(&self, m: BlockMatrices, beta: &AdditiveEstimate) -> SubStatistics {
        let rep = beta.rep_field(&self.grid);
        let vb = m.v.matvec(&rep);
        let wb = m.w.matvec(&rep);
        let bwb = rep.dot(&wb);
        let mut sb = Vec::with_capacity(m.s.len());
        let mut bsb = Vec::with_capacity(m.s.len());
        for sj in &m.s {
            let sjb = sj.matvec(&rep);
            bsb.push(rep.dot(&sjb));
            sb.push(sjb);
        }
        SubStatistics {
            u: m.u,
            v: m.v,
            w: m.w,
            s: m.s,
            vb,
            wb,
            bwb,
            sb,
            bsb,
            density: m.density,
            eta: m.bandwidth,
            degree: m.degree,
        }
    }

    fn accumulate(
        &self,
        block: &DataBlock,
        beta: &AdditiveEstimate,
        h: &[f64],
        mode: BuildMode,
    ) -> Result<Accum> {
        if h.len() != self.grid.d {
            return Err(OgamError::ShapeMismatch(format!(
                "bandwidth has {} entries for d={}",
                h.len(),
                self.grid.d
            )));
        }
        if beta.degree() != self.degree {
            return Err(OgamError::ShapeMismatch(format!(
                "estimate degree {} does not match context degree {}",
                beta.degree(),
                self.degree
            )));
        }
        let table = self.axis_weight_table(block, h)?;
        let grid = self.grid;
        let d = grid.d;
        let dim = self.rep_dim();
        let npts = grid.len();
        let n_inv = 1.0 / block.len() as f64;
        let full = matches!(mode, BuildMode::Full);

        let mut acc = Accum {
            u: full.then(|| MatField::zeros(npts, dim)),
            u_col: VecField::zeros(npts, dim),
            v: MatField::zeros(npts, dim),
            w: full.then(|| MatField::zeros(npts, dim)),
            s: if full {
                (0..d * self.degree)
                    .map(|_| MatField::zeros(npts, dim))
                    .collect()
            } else {
                Vec::new()
            },
            density: vec![0.0; npts],
        };

        // scratch: design row and the per-point axis subindices (odometer)
        let mut row = vec![0.0; dim];
        let mut sub = vec![0usize; d];
        let mut diffs = vec![0.0; d];

        for i in 0..block.len() {
            let obs = block.row(i);
            let y = block.y[i];
            let weights = &table[i * d..(i + 1) * d];
            sub.iter_mut().for_each(|s| *s = 0);
            for idx in 0..npts {
                // product kernel weight; zero outside the support box
                let mut kw = 1.0;
                for j in 0..d {
                    kw *= weights[j][sub[j]];
                    if kw == 0.0 {
                        break;
                    }
                }
                if kw != 0.0 {
                    // design row (1, t_j, t_j^2, ...) and linearized predictor
                    let mut eta_lin = beta.intercept;
                    row[0] = 1.0;
                    for j in 0..d {
                        let ia = sub[j];
                        let t = obs[j] - grid.node(ia);
                        diffs[j] = t;
                        eta_lin += beta.values[j][ia];
                        let mut tp = 1.0;
                        for a in 0..self.degree {
                            tp *= t;
                            row[1 + j * self.degree + a] = tp;
                            eta_lin += beta.coeffs[j][a][ia] * tp;
                        }
                    }
                    let (q1, q2, q3) = self.family.quasi_derivatives(eta_lin, y)?;
                    let kwn = kw * n_inv;
                    acc.density[idx] += kwn;
                    let (wu, wv, ww) = (q1 * kwn, q2 * kwn, q3 * kwn);
                    for r in 0..dim {
                        *acc.u_col.at_mut(idx, r) += wu * row[r];
                    }
                    add_outer(&mut acc.v, idx, &row, wv);
                    if let Some(u) = acc.u.as_mut() {
                        add_outer(u, idx, &row, wu);
                    }
                    if ww != 0.0 {
                        if let Some(w) = acc.w.as_mut() {
                            add_outer(w, idx, &row, ww);
                        }
                        if full {
                            for j in 0..d {
                                let mut tp = 1.0;
                                for a in 0..self.degree {
                                    tp *= diffs[j];
                                    add_outer(
                                        &mut acc.s[j * self.degree + a],
                                        idx,
                                        &row,
                                        ww * tp,
                                    );
                                }
                            }
                        }
                    }
                }
                // advance odometer (row-major: last axis fastest)
                for j in (0..d).rev() {
                    sub[j] += 1;
                    if sub[j] < grid.m {
                        break;
                    }
                    sub[j] = 0;
                }
            }
        }
        Ok(acc)
    }
}

/// Normalized kernel-mass field of one block at bandwidth `h` (the block's
/// density-estimate contribution, independent of any estimate).
pub fn density_field(ctx: &StatContext, block: &DataBlock, h: &[f64]) -> Result<Vec<f64>> {
    let grid = ctx.grid;
    let mut out = vec![0.0; grid.len()];
    let n_inv = 1.0 / block.len() as f64;
    for i in 0..block.len() {
        let mut weights = Vec::with_capacity(grid.d);
        for j in 0..grid.d {
            weights.push(kernel_weights(&grid, ctx.kernel, block.xv(i, j), h[j])?);
        }
        for (idx, v) in out.iter_mut().enumerate() {
            let mut kw = n_inv;
            for (j, wj) in weights.iter().enumerate() {
                kw *= wj[grid.axis_index(idx, j)];
            }
            *v += kw;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
enum BuildMode {
    Full,
    Lean,
}

struct Accum {
    u: Option<MatField>,
    u_col: VecField,
    v: MatField,
    w: Option<MatField>,
    s: Vec<MatField>,
    density: Vec<f64>,
}

/// Current-block pieces used inside the outer iteration.
#[derive(Debug, Clone)]
pub struct CurrentBlock {
    /// First column of U (q1-weighted design moments).
    pub u_col: VecField,
    pub v: MatField,
}

#[inline]
fn add_outer(m: &mut MatField, idx: usize, row: &[f64], w: f64) {
    let dim = m.dim;
    let base = idx * dim * dim;
    for r in 0..dim {
        let wr = w * row[r];
        let off = base + r * dim;
        for c in 0..dim {
            m.data[off + c] += wr * row[c];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(d: usize, m: usize, family: Family, degree: usize) -> StatContext {
        StatContext {
            grid: GridSpec::new(d, m).unwrap(),
            kernel: KernelSpec::Epanechnikov,
            family,
            degree,
        }
    }

    fn xorshift(state: &mut u64) -> f64 {
        *state ^= *state << 13;
        *state ^= *state >> 7;
        *state ^= *state << 17;
        (state.wrapping_mul(0x2545F4914F6CDD1D) >> 11) as f64 / (1u64 << 53) as f64
    }

    fn random_block(d: usize, n: usize, family: Family, seed: u64) -> DataBlock {
        let mut s = seed;
        let mut x = Vec::with_capacity(n * d);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            for _ in 0..d {
                x.push(xorshift(&mut s));
            }
            y.push(match family {
                Family::GaussianIdentity => 2.0 * xorshift(&mut s) - 1.0,
                Family::PoissonLog => (6.0 * xorshift(&mut s)).floor(),
                Family::BernoulliLogit => (xorshift(&mut s) < 0.5) as u8 as f64,
            });
        }
        DataBlock::new(1, d, x, y).unwrap()
    }

    /// Straightforward per-gridpoint oracle built directly from the
    /// definitions, independent of the production accumulation path.
    fn naive_matrices(
        ctx: &StatContext,
        block: &DataBlock,
        beta: &AdditiveEstimate,
        h: &[f64],
    ) -> (MatField, MatField, MatField, Vec<MatField>) {
        let grid = ctx.grid;
        let dim = ctx.rep_dim();
        let mut u = MatField::zeros(grid.len(), dim);
        let mut v = MatField::zeros(grid.len(), dim);
        let mut w = MatField::zeros(grid.len(), dim);
        let mut s: Vec<MatField> = (0..grid.d * ctx.degree)
            .map(|_| MatField::zeros(grid.len(), dim))
            .collect();
        for idx in 0..grid.len() {
            for i in 0..block.len() {
                let mut kw = 1.0 / block.len() as f64;
                for j in 0..grid.d {
                    let wj =
                        kernel_weights(&grid, ctx.kernel, block.xv(i, j), h[j]).unwrap();
                    kw *= wj[grid.axis_index(idx, j)];
                }
                if kw == 0.0 {
                    continue;
                }
                let mut row = vec![1.0; 1];
                for j in 0..grid.d {
                    let t = block.xv(i, j) - grid.node(grid.axis_index(idx, j));
                    for a in 1..=ctx.degree {
                        row.push(t.powi(a as i32));
                    }
                }
                let eta = beta.extrapolate(&grid, idx, block.row(i));
                let (q1, q2, q3) = ctx.family.quasi_derivatives(eta, block.y[i]).unwrap();
                for r in 0..dim {
                    for c in 0..dim {
                        *u.at_mut(idx, r, c) += q1 * kw * row[r] * row[c];
                        *v.at_mut(idx, r, c) += q2 * kw * row[r] * row[c];
                        *w.at_mut(idx, r, c) += q3 * kw * row[r] * row[c];
                        for j in 0..grid.d {
                            let t = block.xv(i, j) - grid.node(grid.axis_index(idx, j));
                            for a in 1..=ctx.degree {
                                *s[j * ctx.degree + a - 1].at_mut(idx, r, c) +=
                                    q3 * kw * t.powi(a as i32) * row[r] * row[c];
                            }
                        }
                    }
                }
            }
        }
        (u, v, w, s)
    }

    #[test]
    fn gaussian_weights_are_pure_kernel() {
        let c = ctx(1, 11, Family::GaussianIdentity, 1);
        let block = DataBlock::new(1, 1, vec![0.5], vec![2.0]).unwrap();
        let beta = AdditiveEstimate::zero(&c.grid, 1, vec![0.2]);
        let idx = 5; // node 0.5
        let w = c.observation_weights(&block, &beta, &[0.2], idx).unwrap();
        let kw = kernel_weights(&c.grid, c.kernel, 0.5, 0.2).unwrap()[5];
        assert!((w[0].0 - 2.0 * kw).abs() < 1e-12); // q1 = y - 0
        assert!((w[0].1 + kw).abs() < 1e-12); // nu = -K
        assert_eq!(w[0].2, 0.0); // omega = 0
    }

    #[test]
    fn out_of_support_observation_has_zero_weights() {
        let c = ctx(2, 11, Family::PoissonLog, 1);
        let block = DataBlock::new(1, 2, vec![0.05, 0.05], vec![3.0]).unwrap();
        let beta = AdditiveEstimate::zero(&c.grid, 1, vec![0.1, 0.1]);
        // node (1.0, 1.0) is far outside the support box of the observation
        let idx = c.grid.len() - 1;
        let w = c.observation_weights(&block, &beta, &[0.1, 0.1], idx).unwrap();
        assert_eq!(w[0], (0.0, 0.0, 0.0));
    }

    #[test]
    fn poisson_weight_at_own_location() {
        let c = ctx(1, 11, Family::PoissonLog, 1);
        let block = DataBlock::new(1, 1, vec![0.5], vec![4.0]).unwrap();
        let beta = AdditiveEstimate::zero(&c.grid, 1, vec![0.2]);
        let w = c.observation_weights(&block, &beta, &[0.2], 5).unwrap();
        let kw = kernel_weights(&c.grid, c.kernel, 0.5, 0.2).unwrap()[5];
        // q1(0, y) = y - 1
        assert!((w[0].0 - 3.0 * kw).abs() < 1e-12);
    }

    #[test]
    fn single_observation_gram_matrix() {
        // V(x) = -K_h(x, X) [1, X-x; X-x, (X-x)^2] for gaussian-identity, d=1
        let c = ctx(1, 21, Family::GaussianIdentity, 1);
        let x_obs = 0.47;
        let block = DataBlock::new(1, 1, vec![x_obs], vec![1.0]).unwrap();
        let beta = AdditiveEstimate::zero(&c.grid, 1, vec![0.3]);
        let m = c.build_block_matrices(&block, &beta, &[0.3]).unwrap();
        let kw = kernel_weights(&c.grid, c.kernel, x_obs, 0.3).unwrap();
        for idx in 0..c.grid.len() {
            let t = x_obs - c.grid.node(idx);
            assert!((m.v.at(idx, 0, 0) + kw[idx]).abs() < 1e-12);
            assert!((m.v.at(idx, 0, 1) + kw[idx] * t).abs() < 1e-12);
            assert!((m.v.at(idx, 1, 0) + kw[idx] * t).abs() < 1e-12);
            assert!((m.v.at(idx, 1, 1) + kw[idx] * t * t).abs() < 1e-12);
            // gaussian: W and S vanish identically
            assert_eq!(m.w.at(idx, 0, 0), 0.0);
            assert_eq!(m.s[0].at(idx, 1, 1), 0.0);
        }
    }

    #[test]
    fn matrices_match_naive_oracle() {
        let c = ctx(2, 11, Family::PoissonLog, 1);
        let block = random_block(2, 5, Family::PoissonLog, 99);
        let mut beta = AdditiveEstimate::zero(&c.grid, 1, vec![0.25, 0.3]);
        beta.intercept = 0.4;
        for i in 0..c.grid.m {
            let x = c.grid.node(i);
            beta.values[0][i] = 0.3 * (x - 0.5);
            beta.values[1][i] = -0.2 * x * x;
            beta.coeffs[0][0][i] = 0.3;
            beta.coeffs[1][0][i] = -0.4 * x;
        }
        let h = [0.25, 0.3];
        let got = c.build_block_matrices(&block, &beta, &h).unwrap();
        let (u, v, w, s) = naive_matrices(&c, &block, &beta, &h);
        for idx in 0..c.grid.len() {
            for r in 0..3 {
                for col in 0..3 {
                    assert!((got.u.at(idx, r, col) - u.at(idx, r, col)).abs() < 1e-12);
                    assert!((got.v.at(idx, r, col) - v.at(idx, r, col)).abs() < 1e-12);
                    assert!((got.w.at(idx, r, col) - w.at(idx, r, col)).abs() < 1e-12);
                    for js in 0..2 {
                        assert!(
                            (got.s[js].at(idx, r, col) - s[js].at(idx, r, col)).abs() < 1e-12
                        );
                    }
                }
            }
        }
        // V is symmetric by construction
        for idx in 0..c.grid.len() {
            for r in 0..3 {
                for col in 0..3 {
                    assert!((got.v.at(idx, r, col) - got.v.at(idx, col, r)).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn quadratic_degree_matches_naive_oracle() {
        let c = ctx(1, 9, Family::PoissonLog, 2);
        let block = random_block(1, 4, Family::PoissonLog, 7);
        let mut beta = AdditiveEstimate::zero(&c.grid, 2, vec![0.3]);
        beta.intercept = 0.2;
        for i in 0..c.grid.m {
            let x = c.grid.node(i);
            beta.values[0][i] = 0.1 * x;
            beta.coeffs[0][0][i] = 0.1;
            beta.coeffs[0][1][i] = 0.05;
        }
        let got = c.build_block_matrices(&block, &beta, &[0.3]).unwrap();
        let (u, v, w, s) = naive_matrices(&c, &block, &beta, &[0.3]);
        for idx in 0..c.grid.len() {
            for r in 0..3 {
                for col in 0..3 {
                    assert!((got.u.at(idx, r, col) - u.at(idx, r, col)).abs() < 1e-12);
                    assert!((got.v.at(idx, r, col) - v.at(idx, r, col)).abs() < 1e-12);
                    assert!((got.w.at(idx, r, col) - w.at(idx, r, col)).abs() < 1e-12);
                    assert!((got.s[0].at(idx, r, col) - s[0].at(idx, r, col)).abs() < 1e-12);
                    assert!((got.s[1].at(idx, r, col) - s[1].at(idx, r, col)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn sub_statistics_contractions() {
        let c = ctx(2, 9, Family::PoissonLog, 1);
        let block = random_block(2, 6, Family::PoissonLog, 5);
        let mut beta = AdditiveEstimate::zero(&c.grid, 1, vec![0.3, 0.3]);
        beta.intercept = 0.1;
        for i in 0..c.grid.m {
            beta.values[0][i] = 0.2 * c.grid.node(i);
            beta.coeffs[0][0][i] = 0.2;
        }
        let sub = c.build_sub_statistics(&block, &beta, &[0.3, 0.3]).unwrap();
        // recontracting stored V against beta reproduces stored Vb
        let rep = beta.rep_field(&c.grid);
        let vb2 = sub.v.matvec(&rep);
        for i in 0..vb2.data.len() {
            assert!((vb2.data[i] - sub.vb.data[i]).abs() < 1e-12);
        }
        let bwb2 = rep.dot(&sub.w.matvec(&rep));
        for i in 0..bwb2.len() {
            assert!((bwb2[i] - sub.bwb[i]).abs() < 1e-12);
        }
        // zero estimate kills every contraction
        let zero = AdditiveEstimate::zero(&c.grid, 1, vec![0.3, 0.3]);
        let sub0 = c.build_sub_statistics(&block, &zero, &[0.3, 0.3]).unwrap();
        assert!(sub0.vb.data.iter().all(|&v| v == 0.0));
        assert!(sub0.wb.data.iter().all(|&v| v == 0.0));
        assert!(sub0.bwb.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gaussian_sub_statistics_are_linear_only() {
        let c = ctx(2, 9, Family::GaussianIdentity, 1);
        let block = random_block(2, 6, Family::GaussianIdentity, 11);
        let mut beta = AdditiveEstimate::zero(&c.grid, 1, vec![0.3, 0.3]);
        beta.intercept = 0.5;
        let sub = c.build_sub_statistics(&block, &beta, &[0.3, 0.3]).unwrap();
        assert!(sub.w.data.iter().all(|&v| v == 0.0));
        assert!(sub.s.iter().all(|m| m.data.iter().all(|&v| v == 0.0)));
        assert!(sub.wb.data.iter().all(|&v| v == 0.0));
        assert!(sub.u.data.iter().any(|&v| v != 0.0));
        assert!(sub.v.data.iter().any(|&v| v != 0.0));
        assert!(sub.vb.data.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn concatenation_equals_weighted_average() {
        let c = ctx(2, 9, Family::PoissonLog, 1);
        let b1 = random_block(2, 4, Family::PoissonLog, 21);
        let b2 = random_block(2, 8, Family::PoissonLog, 22);
        let pooled = DataBlock::pooled(&[b1.clone(), b2.clone()]).unwrap();
        let beta = AdditiveEstimate::zero(&c.grid, 1, vec![0.3, 0.3]);
        let h = [0.3, 0.3];
        let m1 = c.build_block_matrices(&b1, &beta, &h).unwrap();
        let m2 = c.build_block_matrices(&b2, &beta, &h).unwrap();
        let mp = c.build_block_matrices(&pooled, &beta, &h).unwrap();
        let (w1, w2) = (4.0 / 12.0, 8.0 / 12.0);
        for i in 0..mp.v.data.len() {
            let avg = w1 * m1.v.data[i] + w2 * m2.v.data[i];
            assert!((mp.v.data[i] - avg).abs() < 1e-12);
            let avg_u = w1 * m1.u.data[i] + w2 * m2.u.data[i];
            assert!((mp.u.data[i] - avg_u).abs() < 1e-12);
        }
    }

    #[test]
    fn v_is_negative_semidefinite() {
        let c = ctx(2, 7, Family::PoissonLog, 1);
        let block = random_block(2, 10, Family::PoissonLog, 33);
        let beta = AdditiveEstimate::zero(&c.grid, 1, vec![0.4, 0.4]);
        let m = c.build_block_matrices(&block, &beta, &[0.4, 0.4]).unwrap();
        // -V must be PSD: check x' V x <= 0 for random directions
        let mut s = 17u64;
        for idx in 0..c.grid.len() {
            for _ in 0..5 {
                let z: Vec<f64> = (0..3).map(|_| 2.0 * xorshift(&mut s) - 1.0).collect();
                let mut q = 0.0;
                for r in 0..3 {
                    for col in 0..3 {
                        q += z[r] * m.v.at(idx, r, col) * z[col];
                    }
                }
                assert!(q <= 1e-12, "V not nsd at {idx}: {q}");
            }
        }
    }

    #[test]
    fn lean_build_matches_full_build() {
        let c = ctx(2, 9, Family::PoissonLog, 1);
        let block = random_block(2, 6, Family::PoissonLog, 44);
        let beta = AdditiveEstimate::zero(&c.grid, 1, vec![0.3, 0.3]);
        let full = c.build_block_matrices(&block, &beta, &[0.3, 0.3]).unwrap();
        let lean = c.build_current_block(&block, &beta, &[0.3, 0.3]).unwrap();
        for idx in 0..c.grid.len() {
            for r in 0..3 {
                assert!((lean.u_col.at(idx, r) - full.u.at(idx, r, 0)).abs() < 1e-14);
                for col in 0..3 {
                    assert!((lean.v.at(idx, r, col) - full.v.at(idx, r, col)).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn covariate_validation() {
        let block = DataBlock::new(1, 2, vec![0.5, 1.2], vec![1.0]).unwrap();
        let err = block.validate(Family::PoissonLog).unwrap_err();
        assert!(err.to_string().contains("x2"));
    }
}
