//! Wall-clock comparison of the streaming update against per-checkpoint
//! batch refits on the accumulated data.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::blockstats::{DataBlock, StatContext};
use crate::error::Result;
use crate::family::Family;
use crate::grid::{GridSpec, KernelSpec};
use crate::sim::{SimConfig, SimStream, SimTruth};
use crate::solver::{batch_fit, OnlineFit, SolverConfig};

/// One timing checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRow {
    pub l: usize,
    pub k: usize,
    pub n_total: usize,
    /// Median per-block wall time of the online update near this checkpoint.
    pub online_block_seconds: f64,
    /// Wall time of one batch refit on all data up to this checkpoint.
    pub batch_seconds: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn to_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "l,k,n_total,online_block_seconds,batch_seconds")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{:.9},{}",
                r.l,
                r.k,
                r.n_total,
                r.online_block_seconds,
                r.batch_seconds
                    .map(|b| format!("{b:.9}"))
                    .unwrap_or_default()
            )?;
        }
        Ok(())
    }

    /// Median online per-block time at checkpoint k for candidate length l.
    pub fn online_at(&self, l: usize, k: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.l == l && r.k == k)
            .map(|r| r.online_block_seconds)
    }

    pub fn batch_at(&self, k: usize) -> Option<f64> {
        self.rows.iter().find_map(|r| {
            if r.k == k {
                r.batch_seconds
            } else {
                None
            }
        })
    }
}

/// Run the timing study on the simulation stream with the analytic optimal
/// bandwidth schedule (pilots excluded so the measured cost is the update
/// itself). Batch refits run at each checkpoint when `batch` is set.
#[allow(clippy::too_many_arguments)]
pub fn run_bench(
    grid: GridSpec,
    kernel: KernelSpec,
    family: Family,
    solver: SolverConfig,
    sim: SimConfig,
    l_values: &[usize],
    checkpoints: &[usize],
    batch: bool,
) -> Result<BenchReport> {
    let truth = SimTruth::compute(401);
    let ctx = StatContext {
        grid,
        kernel,
        family,
        degree: 1,
    };
    let mut rows = Vec::new();
    for (li, &l) in l_values.iter().enumerate() {
        let mut fit = OnlineFit::new(ctx, l, solver);
        let mut times: Vec<f64> = Vec::new();
        let mut pooled: Vec<DataBlock> = Vec::new();
        for block in SimStream::new(sim)? {
            let n_after = fit.state.n_total + block.len();
            let h = truth.optimal_bandwidth(n_after, kernel);
            let start = Instant::now();
            fit.process_block(&block, &h)?;
            times.push(start.elapsed().as_secs_f64());
            if batch && li == 0 {
                pooled.push(block);
            }
            let k = fit.state.k;
            if checkpoints.contains(&k) {
                let window = &times[k.saturating_sub(5)..k];
                let mut sorted = window.to_vec();
                sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let online_block_seconds = sorted[sorted.len() / 2];
                let batch_seconds = if batch && li == 0 {
                    let all = DataBlock::pooled(&pooled)?;
                    let hb = truth.optimal_bandwidth(all.len(), kernel);
                    let start = Instant::now();
                    let _ = batch_fit(&ctx, &all, &hb, &solver)?;
                    Some(start.elapsed().as_secs_f64())
                } else {
                    None
                };
                rows.push(BenchRow {
                    l,
                    k,
                    n_total: fit.state.n_total,
                    online_block_seconds,
                    batch_seconds,
                });
            }
        }
    }
    Ok(BenchReport { rows })
}
