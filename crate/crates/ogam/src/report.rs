//! Efficiency reporting: integrated squared errors of component estimates,
//! online-versus-batch relative efficiency, and the theoretical lower bound
//! driven by the candidate sequence length.

use serde::{Deserialize, Serialize};

use crate::error::{OgamError, Result};
use crate::estimate::AdditiveEstimate;
use crate::grid::GridSpec;

/// Theoretical lower bound of the relative efficiency for candidate length
/// L: (1 + 0.183/L + 0.003/L^2)^{-1}.
pub fn efficiency_lower_bound(l: usize) -> Result<f64> {
    if l < 1 {
        return Err(OgamError::InvalidInput("efficiency bound needs L >= 1".into()));
    }
    let l = l as f64;
    Ok(1.0 / (1.0 + 0.183 / l + 0.003 / (l * l)))
}

/// Quadrature of the squared difference between a component estimate and a
/// reference function, after removing each side's own mean over [0,1].
///
/// Mean removal compares shapes only, so the result does not depend on how
/// either side distributes constants between the intercept and the
/// components.
pub fn component_imse(
    grid: &GridSpec,
    estimate: &AdditiveEstimate,
    j: usize,
    reference: impl Fn(f64) -> f64,
) -> f64 {
    let est_mean: f64 = (0..grid.m)
        .map(|i| grid.quad_weight(i) * estimate.values[j][i])
        .sum();
    let ref_vals: Vec<f64> = (0..grid.m).map(|i| reference(grid.node(i))).collect();
    let ref_mean: f64 = (0..grid.m)
        .map(|i| grid.quad_weight(i) * ref_vals[i])
        .sum();
    (0..grid.m)
        .map(|i| {
            let d = (estimate.values[j][i] - est_mean) - (ref_vals[i] - ref_mean);
            grid.quad_weight(i) * d * d
        })
        .sum()
}

/// Squared distance between two fitted components (same centering rule).
pub fn component_discrepancy(
    grid: &GridSpec,
    a: &AdditiveEstimate,
    b: &AdditiveEstimate,
    j: usize,
) -> f64 {
    component_imse(grid, a, j, |x| {
        // evaluate b's component by node lookup; nodes coincide
        let i = (x * (grid.m as f64 - 1.0)).round() as usize;
        b.values[j][i]
    })
}

/// Relative efficiency summary of one configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub l: usize,
    pub replications: usize,
    /// Mean integrated squared error per component, online estimate.
    pub imse_online: Vec<f64>,
    /// Mean integrated squared error per component, batch competitor.
    pub imse_batch: Vec<f64>,
    /// eff_j = imse_batch / imse_online.
    pub efficiency: Vec<f64>,
    /// Theoretical lower bound at this L.
    pub bound: f64,
}

impl EfficiencyReport {
    pub fn from_accumulated(
        l: usize,
        replications: usize,
        imse_online: Vec<f64>,
        imse_batch: Vec<f64>,
    ) -> Result<EfficiencyReport> {
        let efficiency = imse_batch
            .iter()
            .zip(&imse_online)
            .map(|(b, o)| if *o > 0.0 { b / o } else { 1.0 })
            .collect();
        Ok(EfficiencyReport {
            l,
            replications,
            imse_online,
            imse_batch,
            efficiency,
            bound: efficiency_lower_bound(l)?,
        })
    }
}
