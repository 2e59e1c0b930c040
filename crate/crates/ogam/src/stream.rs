//! The full streaming estimator: one main fit plus the bandwidth machinery,
//! per-block diagnostics, and snapshot/restore of the whole state.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bandwidth::{clamp_bandwidth, BandwidthReport, PilotConfig, PilotState};
use crate::blockstats::{DataBlock, StatContext};
use crate::error::{OgamError, Result};
use crate::family::Family;
use crate::grid::{GridSpec, KernelSpec};
use crate::solver::{OnlineFit, SolverConfig};

const SNAPSHOT_VERSION: u32 = 1;

/// How the working bandwidth of each block is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BandwidthMode {
    /// Plug-in rule driven by the online pilot fits.
    Pilot,
    /// One fixed bandwidth vector for every block.
    Fixed(Vec<f64>),
    /// Explicit per-block schedule; the last entry repeats past its end.
    Schedule(Vec<Vec<f64>>),
}

/// One diagnostics record per processed block.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub k: usize,
    pub n_block: usize,
    pub n_total: usize,
    pub h: Vec<f64>,
    /// Moments of the selected pseudo-bandwidths in the leading set:
    /// rho_{K,-1} and rho_{K,2} per axis.
    pub rho_m1: Vec<f64>,
    pub rho_2: Vec<f64>,
    pub outer_iterations: usize,
    pub inner_sweeps: usize,
    pub converged: bool,
    pub residual_sup: f64,
    pub constraint_sup: f64,
    pub ridge_nodes: usize,
    pub wall_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth_report: Option<BandwidthReport>,
}

/// Streaming GAM estimator: main online fit, optional pilots, bandwidth mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineGam {
    pub main: OnlineFit,
    pub pilots: Option<PilotState>,
    pub mode: BandwidthMode,
}

impl OnlineGam {
    pub fn new(
        grid: GridSpec,
        kernel: KernelSpec,
        family: Family,
        l: usize,
        solver: SolverConfig,
        mode: BandwidthMode,
        pilot_config: PilotConfig,
    ) -> Result<Self> {
        let bad_len = match &mode {
            BandwidthMode::Fixed(h) => h.len() != grid.d,
            BandwidthMode::Schedule(s) => s.iter().any(|h| h.len() != grid.d),
            BandwidthMode::Pilot => false,
        };
        if bad_len {
            return Err(OgamError::Config(
                "bandwidth entries must have one value per axis".into(),
            ));
        }
        let ctx = StatContext {
            grid,
            kernel,
            family,
            degree: 1,
        };
        let pilots = matches!(mode, BandwidthMode::Pilot)
            .then(|| PilotState::new(grid, kernel, family, pilot_config, solver));
        Ok(OnlineGam {
            main: OnlineFit::new(ctx, l, solver),
            pilots,
            mode,
        })
    }

    pub fn k(&self) -> usize {
        self.main.state.k
    }

    pub fn n_total(&self) -> usize {
        self.main.state.n_total
    }

    pub fn grid(&self) -> GridSpec {
        self.main.grid
    }

    pub fn family(&self) -> Family {
        self.main.ctx_family
    }

    /// Bandwidth for the block about to be processed (pilots already
    /// advanced when in pilot mode).
    fn block_bandwidth(&mut self, block: &DataBlock) -> Result<(Vec<f64>, Option<BandwidthReport>)> {
        match &self.mode {
            BandwidthMode::Fixed(h) => Ok((h.clone(), None)),
            BandwidthMode::Schedule(schedule) => {
                if schedule.is_empty() {
                    return Err(OgamError::Config("empty bandwidth schedule".into()));
                }
                let idx = self.main.state.k.min(schedule.len() - 1);
                Ok((schedule[idx].clone(), None))
            }
            BandwidthMode::Pilot => {
                let pilots = self.pilots.as_mut().expect("pilot mode keeps pilot state");
                pilots.process_block(block)?;
                let report = pilots.report(self.main.ctx_kernel)?;
                let grid = self.main.grid;
                let h = report
                    .h
                    .iter()
                    .map(|&v| clamp_bandwidth(v, &grid))
                    .collect();
                Ok((h, Some(report)))
            }
        }
    }

    /// Process one block end to end: bandwidth selection, the double-loop
    /// update, and the candidate-store advance.
    pub fn process_block(&mut self, block: &DataBlock) -> Result<DiagnosticsRecord> {
        let start = Instant::now();
        let (h, bandwidth_report) = self.block_bandwidth(block)?;
        let fit = self.main.process_block(block, &h)?;
        let state = &self.main.state;
        Ok(DiagnosticsRecord {
            k: state.k,
            n_block: block.len(),
            n_total: state.n_total,
            h,
            rho_m1: state.sets[0].rho_m1.clone(),
            rho_2: state.sets[0].rho_2.clone(),
            outer_iterations: fit.outer_iterations,
            inner_sweeps: fit.inner_sweeps,
            converged: fit.converged,
            residual_sup: fit.residual_sup,
            constraint_sup: fit.constraint_sup,
            ridge_nodes: fit.ridge_nodes,
            wall_seconds: start.elapsed().as_secs_f64(),
            bandwidth_report,
        })
    }

    /// Persist the whole stream state so processing can resume in another
    /// process.
    pub fn save_snapshot(&self, path: &Path) -> Result<()> {
        let snapshot = Snapshot {
            version: SNAPSHOT_VERSION,
            grid_d: self.main.grid.d,
            grid_m: self.main.grid.m,
            family: self.main.ctx_family.name().to_string(),
            kernel: self.main.ctx_kernel.name().to_string(),
            gam: self.clone(),
        };
        let file = File::create(path)?;
        serde_json::to_writer(BufWriter::new(file), &snapshot)
            .map_err(|e| OgamError::Snapshot(e.to_string()))
    }

    pub fn load_snapshot(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let snapshot: Snapshot = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| OgamError::Snapshot(e.to_string()))?;
        if snapshot.version != SNAPSHOT_VERSION {
            return Err(OgamError::Snapshot(format!(
                "snapshot version {} unsupported (expected {SNAPSHOT_VERSION})",
                snapshot.version
            )));
        }
        if snapshot.grid_d != snapshot.gam.main.grid.d
            || snapshot.grid_m != snapshot.gam.main.grid.m
            || snapshot.family != snapshot.gam.main.ctx_family.name()
        {
            return Err(OgamError::Snapshot("inconsistent snapshot metadata".into()));
        }
        Ok(snapshot.gam)
    }
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    version: u32,
    grid_d: usize,
    grid_m: usize,
    family: String,
    kernel: String,
    gam: OnlineGam,
}
