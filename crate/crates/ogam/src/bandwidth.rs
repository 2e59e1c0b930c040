//! Online bandwidth selection: pilot fits for the curvature integral theta_j
//! and the variance functional sigma_j^2, the online marginal density
//! estimate, and the plug-in rule for the working bandwidth.

use serde::{Deserialize, Serialize};

use crate::blockstats::{DataBlock, StatContext};
use crate::error::{OgamError, Result};
use crate::family::Family;
use crate::grid::{GridSpec, KernelSpec};
use crate::solver::{OnlineFit, SolverConfig};

/// Pilot constants; defaults follow the recommended G = R = 0.5 with
/// candidate length 10.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PilotConfig {
    pub l_prime: usize,
    pub g: f64,
    pub r: f64,
}

impl Default for PilotConfig {
    fn default() -> Self {
        PilotConfig {
            l_prime: 10,
            g: 0.5,
            r: 0.5,
        }
    }
}

/// The two auxiliary online fits driving the plug-in rule: a local-linear
/// stream for the variance functional (bandwidth R N^{-1/5}) and a
/// local-quadratic stream for the curvature integral (bandwidth G N^{-1/7}).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotState {
    pub sigma_fit: OnlineFit,
    pub theta_fit: OnlineFit,
    pub config: PilotConfig,
}

/// Per-block bandwidth diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BandwidthReport {
    /// Curvature integrals theta_j (floored).
    pub theta: Vec<f64>,
    /// Integrated variance functionals sigma_j^2.
    pub sigma2: Vec<f64>,
    /// sigma_j^2(x_j) on the axis grid.
    pub sigma2_field: Vec<Vec<f64>>,
    /// Marginal density estimates on the axis grid.
    pub density: Vec<Vec<f64>>,
    /// Plug-in bandwidth, clamped.
    pub h: Vec<f64>,
    /// Optimal bandwidth from analytic truth, when the caller knows it.
    pub h_reference: Option<Vec<f64>>,
    /// Axis nodes excluded from the sigma integral for lack of local mass.
    pub excluded_nodes: usize,
}

const THETA_FLOOR: f64 = 1e-8;
const MASS_FLOOR: f64 = 1e-12;

impl PilotState {
    pub fn new(
        grid: GridSpec,
        kernel: KernelSpec,
        family: Family,
        config: PilotConfig,
        solver: SolverConfig,
    ) -> Self {
        let sigma_ctx = StatContext {
            grid,
            kernel,
            family,
            degree: 1,
        };
        let theta_ctx = StatContext {
            grid,
            kernel,
            family,
            degree: 2,
        };
        PilotState {
            sigma_fit: OnlineFit::new(sigma_ctx, config.l_prime, solver),
            theta_fit: OnlineFit::new(theta_ctx, config.l_prime, solver),
            config,
        }
    }

    /// Deterministic pilot bandwidth rules at total sample size n.
    pub fn rule_bandwidths(&self, n: usize, grid: &GridSpec) -> (f64, f64) {
        let n = n as f64;
        let h_sigma = clamp_bandwidth(self.config.r * n.powf(-0.2), grid);
        let h_theta = clamp_bandwidth(self.config.g * n.powf(-1.0 / 7.0), grid);
        (h_sigma, h_theta)
    }

    /// Advance both pilot streams with one block.
    pub fn process_block(&mut self, block: &DataBlock) -> Result<()> {
        let grid = self.sigma_fit.grid;
        let n_after = self.sigma_fit.state.n_total + block.len();
        let (h_sigma, h_theta) = self.rule_bandwidths(n_after, &grid);
        self.sigma_fit
            .process_block(block, &vec![h_sigma; grid.d])?;
        self.theta_fit
            .process_block(block, &vec![h_theta; grid.d])?;
        Ok(())
    }

    /// Plug-in bandwidth from the current pilot estimates.
    pub fn report(&self, kernel: KernelSpec) -> Result<BandwidthReport> {
        let grid = self.sigma_fit.grid;
        if self.sigma_fit.state.k == 0 {
            return Err(OgamError::InvalidInput(
                "bandwidth report requested before any block".into(),
            ));
        }
        let density_full = &self.sigma_fit.state.sets[0].density;
        let density: Vec<Vec<f64>> = (0..grid.d)
            .map(|j| grid.marginal(density_full, j))
            .collect::<Result<_>>()?;

        let (sigma2, sigma2_field, excluded_nodes) = pilot_sigma(
            &grid,
            self.sigma_fit.ctx_family,
            &self.sigma_fit.state.beta,
            density_full,
            &density,
        )?;
        let theta = pilot_theta(&grid, &self.theta_fit.state.beta, &density)?;
        let n = self.sigma_fit.state.n_total;
        let h = online_bandwidth(&theta, &sigma2, n, kernel, &grid);
        Ok(BandwidthReport {
            theta,
            sigma2,
            sigma2_field,
            density,
            h,
            h_reference: None,
            excluded_nodes,
        })
    }
}

/// Variance functional from a pilot fit: the inverse kernel-regression
/// estimate of E{ V(m)^{-1} g'(m)^{-2} | X_j = x_j }, integrated over [0,1].
pub fn pilot_sigma(
    grid: &GridSpec,
    family: Family,
    beta: &crate::estimate::AdditiveEstimate,
    density_full: &[f64],
    density_marginals: &[Vec<f64>],
) -> Result<(Vec<f64>, Vec<Vec<f64>>, usize)> {
    let grid = *grid;
    // psi(x) = 1 / (V(m) g'(m)^2) with m from the pilot additive fit
    let mut weighted = vec![0.0; grid.len()];
    for idx in 0..grid.len() {
        let m = family.inverse_link(beta.value_at(&grid, idx));
        let gp = family.link_derivative(m);
        let psi = 1.0 / (family.variance(m) * gp * gp);
        weighted[idx] = psi * density_full[idx];
    }
    let mut sigma2 = Vec::with_capacity(grid.d);
    let mut fields = Vec::with_capacity(grid.d);
    let mut excluded = 0;
    for j in 0..grid.d {
        let num = grid.marginal(&weighted, j)?;
        let mut field = vec![0.0; grid.m];
        let mut acc = 0.0;
        for i in 0..grid.m {
            if density_marginals[j][i] <= MASS_FLOOR || num[i] <= MASS_FLOOR {
                excluded += 1;
                continue;
            }
            field[i] = density_marginals[j][i] / num[i];
            acc += grid.quad_weight(i) * field[i];
        }
        sigma2.push(acc);
        fields.push(field);
    }
    Ok((sigma2, fields, excluded))
}

/// Curvature integral from a local-quadratic pilot fit:
/// theta_j = ∫ (beta_j'')^2 p_j, with beta_j'' = 2 * (quadratic coefficient).
pub fn pilot_theta(
    grid: &GridSpec,
    beta: &crate::estimate::AdditiveEstimate,
    density_marginals: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let grid = *grid;
    if beta.degree() < 2 {
        return Err(OgamError::InvalidInput(
            "theta pilot requires a local-quadratic fit".into(),
        ));
    }
    Ok((0..grid.d)
        .map(|j| {
            let mut acc = 0.0;
            for i in 0..grid.m {
                let dd = 2.0 * beta.coeffs[j][1][i];
                acc += grid.quad_weight(i) * dd * dd * density_marginals[j][i];
            }
            acc.max(THETA_FLOOR)
        })
        .collect())
}

/// Plug-in rule h_j = C(K) { sigma_j^2 / (theta_j N) }^{1/5}, clamped to the
/// resolvable range.
pub fn online_bandwidth(
    theta: &[f64],
    sigma2: &[f64],
    n: usize,
    kernel: KernelSpec,
    grid: &GridSpec,
) -> Vec<f64> {
    let ck = kernel.plugin_constant();
    theta
        .iter()
        .zip(sigma2)
        .map(|(&th, &s2)| {
            let th = th.max(THETA_FLOOR);
            let raw = ck * (s2.max(0.0) / (th * n as f64)).powf(0.2);
            clamp_bandwidth(raw, grid)
        })
        .collect()
}

/// Plug-in bandwidth for the batch competitor: the same rule with pilot
/// values computed on the pooled data.
pub fn batch_plugin_bandwidth(
    grid: GridSpec,
    kernel: KernelSpec,
    family: Family,
    solver: SolverConfig,
    pilot: PilotConfig,
    pooled: &DataBlock,
) -> Result<Vec<f64>> {
    let n = pooled.len();
    let h_sigma = clamp_bandwidth(pilot.r * (n as f64).powf(-0.2), &grid);
    let h_theta = clamp_bandwidth(pilot.g * (n as f64).powf(-1.0 / 7.0), &grid);
    let sigma_ctx = StatContext {
        grid,
        kernel,
        family,
        degree: 1,
    };
    let theta_ctx = StatContext {
        grid,
        kernel,
        family,
        degree: 2,
    };
    let (sigma_est, _) =
        crate::solver::batch_fit(&sigma_ctx, pooled, &vec![h_sigma; grid.d], &solver)?;
    let (theta_est, _) =
        crate::solver::batch_fit(&theta_ctx, pooled, &vec![h_theta; grid.d], &solver)?;
    let density_full = crate::blockstats::density_field(&sigma_ctx, pooled, &vec![h_sigma; grid.d])?;
    let density: Vec<Vec<f64>> = (0..grid.d)
        .map(|j| grid.marginal(&density_full, j))
        .collect::<Result<_>>()?;
    let (sigma2, _, _) = pilot_sigma(&grid, family, &sigma_est, &density_full, &density)?;
    let theta = pilot_theta(&grid, &theta_est, &density)?;
    Ok(online_bandwidth(&theta, &sigma2, n, kernel, &grid))
}

/// Bandwidth guard: at least half a grid cell, at most 0.5.
pub fn clamp_bandwidth(h: f64, grid: &GridSpec) -> f64 {
    let lo = 0.5 / grid.m as f64;
    if !h.is_finite() {
        return 0.5;
    }
    h.clamp(lo, 0.5)
}
