//! The double-loop estimator: an outer linearization of the aggregated
//! estimating equations and an inner Gauss-Seidel sweep over components,
//! producing the updated estimate from stored statistics plus the current
//! block. The batch reference fit runs the same machinery on pooled data
//! with no prior statistics.

use serde::{Deserialize, Serialize};

use crate::blockstats::{CurrentBlock, DataBlock, StatContext};
use crate::error::{OgamError, Result};
use crate::estimate::AdditiveEstimate;
use crate::field::{MatField, VecField};
use crate::store::{candidate_sequence, StatisticsSet, StreamState};

/// Solver tolerances and iteration caps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Outer stop: sup-norm of one update over (beta0, beta_j, h-scaled
    /// coefficients).
    pub eps_outer: f64,
    /// Inner stop: sup-norm change of one Gauss-Seidel cycle.
    pub eps_inner: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Abort threshold on a single update norm.
    pub divergence_guard: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            eps_outer: 1e-6,
            eps_inner: 1e-8,
            max_outer: 50,
            max_inner: 100,
            divergence_guard: 1e3,
        }
    }
}

/// Per-block fit diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub outer_iterations: usize,
    pub inner_sweeps: usize,
    pub converged: bool,
    /// Sup-norm of the last applied update.
    pub final_delta: f64,
    /// Stationarity residual: sup over equation rows of the assembled
    /// estimating functional at the returned estimate.
    pub residual_sup: f64,
    /// Sup over components of the norm-constraint value after recentering.
    pub constraint_sup: f64,
    /// Grid nodes where the 2x2 (or 3x3) system needed a ridge.
    pub ridge_nodes: usize,
    /// Parametric initialization fell back to the zero function.
    pub init_fallback: bool,
}

/// Parametric GLM initialization result.
#[derive(Debug, Clone)]
pub struct ParametricInit {
    pub estimate: AdditiveEstimate,
    /// (b0, b_1, .., b_d) of the fitted linear predictor.
    pub coefficients: Vec<f64>,
    /// True when the scoring iteration was skipped or failed and the zero
    /// function was returned instead.
    pub fallback: bool,
}

/// Fit the parametric GLM g(m) = b0 + sum_j b_j x_j by Newton scoring and
/// turn it into a centered additive estimate used as the stream head.
pub fn init_parametric(
    ctx: &StatContext,
    block: &DataBlock,
    bandwidth: &[f64],
) -> Result<ParametricInit> {
    let d = ctx.grid.d;
    let p = d + 1;
    let n = block.len();
    let fallback = |flag: bool| ParametricInit {
        estimate: AdditiveEstimate::zero(&ctx.grid, ctx.degree, bandwidth.to_vec()),
        coefficients: vec![0.0; p],
        fallback: flag,
    };
    if n < p {
        return Ok(fallback(true));
    }
    let mut b = vec![0.0; p];
    let mut ok = true;
    for _ in 0..50 {
        // score and expected information of the canonical GLM
        let mut score = vec![0.0; p];
        let mut info = vec![0.0; p * p];
        for i in 0..n {
            let mut eta = b[0];
            for j in 0..d {
                eta += b[j + 1] * block.xv(i, j);
            }
            let (q1, q2, _) = ctx.family.quasi_derivatives(eta, block.y[i])?;
            let mut row = vec![1.0; p];
            row[1..].copy_from_slice(block.row(i));
            for r in 0..p {
                score[r] += q1 * row[r];
                for c in 0..p {
                    info[r * p + c] += -q2 * row[r] * row[c];
                }
            }
        }
        let mut step = score.clone();
        if !solve_dense(&mut info, &mut step) {
            ok = false;
            break;
        }
        let norm = step.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !norm.is_finite() || norm > 1e6 {
            ok = false;
            break;
        }
        for r in 0..p {
            b[r] += step[r];
        }
        if norm <= 1e-10 {
            break;
        }
    }
    if !ok {
        return Ok(fallback(true));
    }
    let mut est = AdditiveEstimate::zero(&ctx.grid, ctx.degree, bandwidth.to_vec());
    let mut intercept = b[0];
    for j in 0..d {
        // beta_j(x) = b_j (x - 1/2); the uniform mean moves into the
        // intercept, the solver's own recentering fixes the exact gauge
        let center = 0.5 * b[j + 1];
        for i in 0..ctx.grid.m {
            est.values[j][i] = b[j + 1] * ctx.grid.node(i) - center;
            est.coeffs[j][0][i] = b[j + 1];
        }
        intercept += center;
    }
    est.intercept = intercept;
    Ok(ParametricInit {
        estimate: est,
        coefficients: b,
        fallback: false,
    })
}

/// Dense solve with partial pivoting; returns false on singularity.
fn solve_dense(a: &mut [f64], b: &mut [f64]) -> bool {
    let n = b.len();
    debug_assert_eq!(a.len(), n * n);
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return false;
    }
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if a[r * n + col].abs() > a[piv * n + col].abs() {
                piv = r;
            }
        }
        if a[piv * n + col].abs() < 1e-13 * scale {
            return false;
        }
        if piv != col {
            for c in 0..n {
                a.swap(piv * n + c, col * n + c);
            }
            b.swap(piv, col);
        }
        let diag = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / diag;
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                a[r * n + c] -= f * a[col * n + c];
            }
            b[r] -= f * b[col];
        }
    }
    for r in (0..n).rev() {
        let mut acc = b[r];
        for c in r + 1..n {
            acc -= a[r * n + c] * b[c];
        }
        b[r] = acc / a[r * n + r];
    }
    true
}

/// The assembled outer-iteration system: marginalized coefficient matrices,
/// right-hand sides and the constraint marginals, all derived from the
/// stored statistics, the current block and the current iterate.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub degree: usize,
    pub m: usize,
    pub d: usize,
    /// Numerator and denominator integrals of the intercept update.
    pub num0: f64,
    pub den0: f64,
    /// Negative residual marginals; `zeta[j][i * (p+1) + r]`.
    pub zeta: Vec<Vec<f64>>,
    /// Per-component coefficient matrices; `mj[j]` holds (p+1)^2 entries per
    /// axis node.
    pub mj: Vec<Vec<f64>>,
    /// Cross matrices for ordered pairs (j, l), j != l, flattened over the
    /// (x_j, x_l) plane; `mjl[j * d + l]`.
    pub mjl: Vec<Vec<f64>>,
    /// Constraint marginals of the plain aggregated V: first row entries.
    pub bar00: Vec<Vec<f64>>,
    /// `bar0a[j][(a-1) * m + i]` pairs with the order-a coefficient.
    pub bar0a: Vec<Vec<f64>>,
    /// Integral of the aggregated V00 over the whole cube.
    pub den_c: f64,
    /// Sup over equation rows of the residual marginals (stationarity).
    pub residual_sup: f64,
}

impl AssembledSystem {
    fn blk(&self) -> usize {
        self.degree + 1
    }
}

/// Assemble the linearized system at `beta` from an optional stored set, the
/// current block pieces and the block weight `w = n_K / N_K`.
pub fn assemble_system(
    ctx: &StatContext,
    stored: Option<&StatisticsSet>,
    current: &CurrentBlock,
    beta: &AdditiveEstimate,
    w: f64,
) -> Result<AssembledSystem> {
    if w.is_nan() || w <= 0.0 || w > 1.0 {
        return Err(OgamError::InvalidInput(format!("block weight {w} outside (0,1]")));
    }
    let grid = ctx.grid;
    let dim = ctx.rep_dim();
    let degree = ctx.degree;
    let npts = grid.len();
    let keep = 1.0 - w;

    // residual integrand rows and aggregated Jacobian
    let mut res = VecField::zeros(npts, dim);
    let mut jac = MatField::zeros(npts, dim);
    let mut vbar0 = VecField::zeros(npts, dim);

    if let Some(set) = stored {
        if keep > 0.0 {
            let rep = beta.rep_field(&grid);
            let vb_cur = set.v.matvec(&rep);
            let wb_cur = set.w.matvec(&rep);
            let wqf = rep.dot(&wb_cur);
            let wcross = rep.dot(&set.wb);
            for idx in 0..npts {
                // row 0 and the W-based corrections
                let d2w = wqf[idx] - 2.0 * wcross[idx] + set.bwb[idx];
                *res.at_mut(idx, 0) = keep
                    * (set.u.at(idx, 0, 0) + (vb_cur.at(idx, 0) - set.vb.at(idx, 0))
                        + 0.5 * d2w);
                for c in 0..dim {
                    *jac.at_mut(idx, 0, c) = keep
                        * (set.v.at(idx, 0, c) + (wb_cur.at(idx, c) - set.wb.at(idx, c)));
                    *vbar0.at_mut(idx, c) = keep * set.v.at(idx, 0, c);
                }
            }
            for j in 0..grid.d {
                for a in 1..=degree {
                    let slot = 1 + j * degree + (a - 1);
                    let js = j * degree + (a - 1);
                    let sb_cur = set.s[js].matvec(&rep);
                    let sqf = rep.dot(&sb_cur);
                    let scross = rep.dot(&set.sb[js]);
                    for idx in 0..npts {
                        let d2s = sqf[idx] - 2.0 * scross[idx] + set.bsb[js][idx];
                        *res.at_mut(idx, slot) = keep
                            * (set.u.at(idx, slot, 0)
                                + (vb_cur.at(idx, slot) - set.vb.at(idx, slot))
                                + 0.5 * d2s);
                        for c in 0..dim {
                            *jac.at_mut(idx, slot, c) = keep
                                * (set.v.at(idx, slot, c)
                                    + (sb_cur.at(idx, c) - set.sb[js].at(idx, c)));
                        }
                    }
                }
            }
        }
    }

    for idx in 0..npts {
        for r in 0..dim {
            *res.at_mut(idx, r) += w * current.u_col.at(idx, r);
            for c in 0..dim {
                *jac.at_mut(idx, r, c) += w * current.v.at(idx, r, c);
            }
            *vbar0.at_mut(idx, r) += w * current.v.at(idx, 0, r);
        }
    }

    // integral reductions
    let res0_field = res.entry_field(0);
    let num0 = grid.integrate(&res0_field);
    let den0 = grid.integrate(&jac.entry_field(0, 0));
    if den0 == 0.0 {
        return Err(OgamError::InvalidInput(
            "degenerate system: aggregated V00 integrates to zero".into(),
        ));
    }

    let blk = degree + 1;
    let rows_of = |j: usize| -> Vec<usize> {
        let mut rows = vec![0usize];
        for a in 1..=degree {
            rows.push(1 + j * degree + (a - 1));
        }
        rows
    };

    let mut zeta = Vec::with_capacity(grid.d);
    let mut mj = Vec::with_capacity(grid.d);
    let mut bar00 = Vec::with_capacity(grid.d);
    let mut bar0a = Vec::with_capacity(grid.d);
    let mut residual_sup = num0.abs();
    for j in 0..grid.d {
        let rows = rows_of(j);
        let mut zj = vec![0.0; grid.m * blk];
        for (rl, &r) in rows.iter().enumerate() {
            let marg = grid.marginal(&res.entry_field(r), j)?;
            for i in 0..grid.m {
                zj[i * blk + rl] = -marg[i];
                residual_sup = residual_sup.max(marg[i].abs());
            }
        }
        zeta.push(zj);

        let mut mjj = vec![0.0; grid.m * blk * blk];
        for (rl, &r) in rows.iter().enumerate() {
            for (cl, &c) in rows.iter().enumerate() {
                let marg = grid.marginal(&jac.entry_field(r, c), j)?;
                for i in 0..grid.m {
                    mjj[(i * blk + rl) * blk + cl] = marg[i];
                }
            }
        }
        mj.push(mjj);

        bar00.push(grid.marginal(&vbar0.entry_field(0), j)?);
        let mut ba = vec![0.0; degree * grid.m];
        for a in 1..=degree {
            let marg = grid.marginal(&vbar0.entry_field(1 + j * degree + (a - 1)), j)?;
            ba[(a - 1) * grid.m..a * grid.m].copy_from_slice(&marg);
        }
        bar0a.push(ba);
    }

    let mut mjl = vec![Vec::new(); grid.d * grid.d];
    for j in 0..grid.d {
        let rows = rows_of(j);
        for l in 0..grid.d {
            if l == j {
                continue;
            }
            let cols = rows_of(l);
            let mut field = vec![0.0; grid.m * grid.m * blk * blk];
            for (rl, &r) in rows.iter().enumerate() {
                for (cl, &c) in cols.iter().enumerate() {
                    let marg = grid.marginal_pair(&jac.entry_field(r, c), j, l)?;
                    for ij in 0..grid.m {
                        for il in 0..grid.m {
                            field[(ij * grid.m + il) * blk * blk + rl * blk + cl] =
                                marg[ij * grid.m + il];
                        }
                    }
                }
            }
            mjl[j * grid.d + l] = field;
        }
    }

    Ok(AssembledSystem {
        degree,
        m: grid.m,
        d: grid.d,
        num0,
        den0,
        zeta,
        mj,
        mjl,
        bar00,
        bar0a,
        den_c: grid.integrate(&vbar0.entry_field(0)),
        residual_sup,
    })
}

/// Result of one outer step before the constraint update.
#[derive(Debug, Clone)]
pub struct OuterStep {
    pub xi0: f64,
    /// Component updates; `xi[j][i * (p+1) + r]` with r = 0 the value and
    /// r = a the order-a coefficient update.
    pub xi: Vec<Vec<f64>>,
    pub sweeps: usize,
    /// Sup-norm change of each inner cycle.
    pub inner_changes: Vec<f64>,
    pub ridge_nodes: usize,
}

/// One Gauss-Seidel cycle over components: component j uses this cycle's
/// values for l < j and the previous cycle's for l > j. Returns the sup-norm
/// change (h-scaled per coefficient order) and the ridge-node count.
pub fn inner_sweep(
    sys: &AssembledSystem,
    xi: &mut [Vec<f64>],
    xi0: f64,
    grid: &crate::grid::GridSpec,
    h: &[f64],
) -> (f64, usize) {
    let blk = sys.blk();
    let m = sys.m;
    let mut max_change = 0.0f64;
    let mut ridge_nodes = 0;
    let mut cross = vec![0.0; m * blk];
    let mut mat = vec![0.0; blk * blk];
    let mut rhs = vec![0.0; blk];
    for j in 0..sys.d {
        // accumulate cross-component integrals sum_{l != j} int Mjl xi_l
        cross.iter_mut().for_each(|v| *v = 0.0);
        for l in 0..sys.d {
            if l == j {
                continue;
            }
            let field = &sys.mjl[j * sys.d + l];
            for ij in 0..m {
                for il in 0..m {
                    let qw = grid.quad_weight(il);
                    let base = (ij * m + il) * blk * blk;
                    for r in 0..blk {
                        let mut acc = 0.0;
                        for c in 0..blk {
                            acc += field[base + r * blk + c] * xi[l][il * blk + c];
                        }
                        cross[ij * blk + r] += qw * acc;
                    }
                }
            }
        }
        for i in 0..m {
            let mbase = i * blk * blk;
            for r in 0..blk {
                rhs[r] = sys.zeta[j][i * blk + r]
                    - xi0 * sys.mj[j][mbase + r * blk]
                    - cross[i * blk + r];
            }
            mat.copy_from_slice(&sys.mj[j][mbase..mbase + blk * blk]);
            let mut sol = rhs.clone();
            if !solve_dense(&mut mat, &mut sol) {
                // no kernel mass at this node: ridge the system and flag it
                mat.copy_from_slice(&sys.mj[j][mbase..mbase + blk * blk]);
                let trace: f64 = (0..blk).map(|r| mat[r * blk + r]).sum();
                let ridge = 1e-10 * trace.abs().max(f64::MIN_POSITIVE);
                for r in 0..blk {
                    mat[r * blk + r] += ridge;
                }
                sol.copy_from_slice(&rhs);
                if !solve_dense(&mut mat, &mut sol) {
                    sol.iter_mut().for_each(|v| *v = 0.0);
                }
                ridge_nodes += 1;
            }
            for r in 0..blk {
                let scale = h[j].powi(r as i32);
                max_change = max_change.max(scale * (sol[r] - xi[j][i * blk + r]).abs());
                xi[j][i * blk + r] = sol[r];
            }
        }
    }
    (max_change, ridge_nodes)
}

/// Full outer step: the intercept update followed by the inner iteration to
/// its tolerance.
pub fn outer_step(
    sys: &AssembledSystem,
    grid: &crate::grid::GridSpec,
    h: &[f64],
    config: &SolverConfig,
) -> OuterStep {
    let blk = sys.blk();
    let xi0 = -sys.num0 / sys.den0;
    let mut xi = vec![vec![0.0; sys.m * blk]; sys.d];
    let mut inner_changes = Vec::new();
    let mut ridge_nodes = 0;
    for _ in 0..config.max_inner {
        let (change, ridged) = inner_sweep(sys, &mut xi, xi0, grid, h);
        ridge_nodes += ridged;
        inner_changes.push(change);
        if change <= config.eps_inner {
            break;
        }
        // cross terms vanish in one dimension; a second cycle cannot move
        if sys.d == 1 {
            break;
        }
    }
    OuterStep {
        xi0,
        sweeps: inner_changes.len(),
        xi,
        inner_changes,
        ridge_nodes,
    }
}

/// Apply one outer step to the estimate under the norm constraint: the
/// recentering constants c_j move the component means into the intercept.
pub fn apply_constraint_update(
    beta: &AdditiveEstimate,
    step: &OuterStep,
    sys: &AssembledSystem,
    grid: &crate::grid::GridSpec,
    h: &[f64],
) -> (AdditiveEstimate, Vec<f64>) {
    let blk = sys.blk();
    let mut out = beta.clone();
    let mut cjs = Vec::with_capacity(sys.d);
    let mut c_sum = 0.0;
    for j in 0..sys.d {
        let mut num = 0.0;
        for i in 0..sys.m {
            let qw = grid.quad_weight(i);
            let mut a_j = sys.bar00[j][i] * step.xi[j][i * blk];
            for a in 1..=sys.degree {
                a_j += sys.bar0a[j][(a - 1) * sys.m + i]
                    * h[j].powi(a as i32)
                    * step.xi[j][i * blk + a];
            }
            num += qw * a_j;
        }
        let cj = num / sys.den_c;
        cjs.push(cj);
        c_sum += cj;
        for i in 0..sys.m {
            out.values[j][i] += step.xi[j][i * blk] - cj;
            for a in 1..=sys.degree {
                out.coeffs[j][a - 1][i] += step.xi[j][i * blk + a];
            }
        }
    }
    out.intercept += step.xi0 + c_sum;
    (out, cjs)
}

/// Norm-constraint values of each component under the assembled plain V.
pub fn constraint_values(
    beta: &AdditiveEstimate,
    sys: &AssembledSystem,
    grid: &crate::grid::GridSpec,
    h: &[f64],
) -> Vec<f64> {
    (0..sys.d)
        .map(|j| {
            let mut acc = 0.0;
            for i in 0..sys.m {
                let qw = grid.quad_weight(i);
                let mut v = sys.bar00[j][i] * beta.values[j][i];
                for a in 1..=sys.degree {
                    v += sys.bar0a[j][(a - 1) * sys.m + i]
                        * h[j].powi(a as i32)
                        * beta.coeffs[j][a - 1][i];
                }
                acc += qw * v;
            }
            acc
        })
        .collect()
}

/// Shift component means into the intercept so the constraint holds exactly
/// under the supplied assembled V (gauge move; leaves beta(x) unchanged).
pub fn recenter(
    beta: &mut AdditiveEstimate,
    sys: &AssembledSystem,
    grid: &crate::grid::GridSpec,
    h: &[f64],
) {
    let values = constraint_values(beta, sys, grid, h);
    for (j, cv) in values.iter().enumerate() {
        let cj = cv / sys.den_c;
        for i in 0..sys.m {
            beta.values[j][i] -= cj;
        }
        beta.intercept += cj;
    }
}

/// Run the outer loop at one bandwidth against an optional stored set; the
/// shared core of the streaming update and the batch fit.
#[allow(clippy::too_many_arguments)]
fn solve_at(
    ctx: &StatContext,
    stored: Option<&StatisticsSet>,
    block: &DataBlock,
    init: AdditiveEstimate,
    h: &[f64],
    w: f64,
    config: &SolverConfig,
) -> Result<(AdditiveEstimate, FitDiagnostics, AssembledSystem)> {
    let mut beta = init;
    beta.bandwidth = h.to_vec();
    let mut outer_iterations = 0;
    let mut inner_sweeps = 0;
    let mut ridge_nodes = 0;
    let mut converged = false;
    let mut final_delta = f64::NAN;
    for _ in 0..config.max_outer {
        let current = ctx.build_current_block(block, &beta, h)?;
        let sys = assemble_system(ctx, stored, &current, &beta, w)?;
        let step = outer_step(&sys, &ctx.grid, h, config);
        let (new_beta, _) = apply_constraint_update(&beta, &step, &sys, &ctx.grid, h);
        let delta = new_beta.sup_distance(&beta);
        outer_iterations += 1;
        inner_sweeps += step.sweeps;
        ridge_nodes += step.ridge_nodes;
        beta = new_beta;
        final_delta = delta;
        if !delta.is_finite() || delta > config.divergence_guard {
            return Err(OgamError::InvalidInput(format!(
                "solver diverged at block {}: update norm {delta}",
                block.index
            )));
        }
        if delta <= config.eps_outer {
            converged = true;
            break;
        }
    }
    // final pass at the converged estimate: stationarity residual, exact
    // recentering under the final aggregated V
    let current = ctx.build_current_block(block, &beta, h)?;
    let sys = assemble_system(ctx, stored, &current, &beta, w)?;
    recenter(&mut beta, &sys, &ctx.grid, h);
    let constraint_sup = constraint_values(&beta, &sys, &ctx.grid, h)
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let diag = FitDiagnostics {
        outer_iterations,
        inner_sweeps,
        converged,
        final_delta,
        residual_sup: sys.residual_sup,
        constraint_sup,
        ridge_nodes,
        init_fallback: false,
    };
    Ok((beta, diag, sys))
}

/// One online smooth-backfitting stream at a caller-supplied bandwidth
/// schedule: the stored-state plus double-loop update of Algorithm-style
/// block processing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineFit {
    pub ctx_family: crate::family::Family,
    pub ctx_kernel: crate::grid::KernelSpec,
    pub grid: crate::grid::GridSpec,
    pub degree: usize,
    pub config: SolverConfig,
    pub state: StreamState,
}

impl OnlineFit {
    pub fn new(ctx: StatContext, l: usize, config: SolverConfig) -> Self {
        let beta = AdditiveEstimate::zero(&ctx.grid, ctx.degree, vec![0.5; ctx.grid.d]);
        OnlineFit {
            ctx_family: ctx.family,
            ctx_kernel: ctx.kernel,
            grid: ctx.grid,
            degree: ctx.degree,
            config,
            state: StreamState::new(beta, l),
        }
    }

    pub fn ctx(&self) -> StatContext {
        StatContext {
            grid: self.grid,
            kernel: self.ctx_kernel,
            family: self.ctx_family,
            degree: self.degree,
        }
    }

    pub fn estimate(&self) -> &AdditiveEstimate {
        &self.state.beta
    }

    /// Process one block at bandwidth `h`: fit the update from the matched
    /// stored set plus this block, then fold the block's sub-statistics for
    /// every candidate bandwidth into the store.
    pub fn process_block(&mut self, block: &DataBlock, h: &[f64]) -> Result<FitDiagnostics> {
        let ctx = self.ctx();
        block.validate(ctx.family)?;
        let n_k = block.len();
        let w = n_k as f64 / (self.state.n_total + n_k) as f64;
        let candidates = candidate_sequence(h, self.state.l)?;

        let mut init_fallback = false;
        let init = if self.state.k == 0 {
            let pinit = init_parametric(&ctx, block, h)?;
            init_fallback = pinit.fallback;
            pinit.estimate
        } else {
            self.state.beta.clone()
        };

        let stored_idx = self.state.selected_set(h).map(|(j, _)| j);
        let stored = stored_idx.map(|j| self.state.sets[j].clone());
        let (beta, mut diag, _) =
            solve_at(&ctx, stored.as_ref(), block, init, h, w, &self.config)?;
        diag.init_fallback = init_fallback;

        let mut subs = Vec::with_capacity(self.state.l);
        for eta in &candidates {
            subs.push(ctx.build_sub_statistics(block, &beta, eta)?);
        }
        self.state.advance(subs, beta, n_k)?;
        Ok(diag)
    }
}

/// Classical smooth backfitting on pooled data: a single-block fit with no
/// prior statistics, sharing grid, kernel and quadrature with the online
/// path.
pub fn batch_fit(
    ctx: &StatContext,
    pooled: &DataBlock,
    h: &[f64],
    config: &SolverConfig,
) -> Result<(AdditiveEstimate, FitDiagnostics)> {
    pooled.validate(ctx.family)?;
    let pinit = init_parametric(ctx, pooled, h)?;
    let (beta, mut diag, _) = solve_at(ctx, None, pooled, pinit.estimate, h, 1.0, config)?;
    diag.init_fallback = pinit.fallback;
    Ok((beta, diag))
}

/// Assemble the final system at the current estimate (diagnostic surface for
/// stationarity and constraint checks).
pub fn assemble_at_estimate(
    ctx: &StatContext,
    stored: Option<&StatisticsSet>,
    block: &DataBlock,
    beta: &AdditiveEstimate,
    h: &[f64],
    w: f64,
) -> Result<AssembledSystem> {
    let current = ctx.build_current_block(block, beta, h)?;
    assemble_system(ctx, stored, &current, beta, w)
}
