//! Operations behind the command-line surface: stream driving, batch
//! comparison, the replicated efficiency study, and file emission.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bandwidth::batch_plugin_bandwidth;
use crate::blockstats::{DataBlock, StatContext};
use crate::config::RunConfig;
use crate::error::{OgamError, Result};
use crate::estimate::AdditiveEstimate;
use crate::grid::GridSpec;
use crate::ingest::{write_blocks_csv, BlockReader};
use crate::report::{component_imse, EfficiencyReport};
use crate::sim::{self, SimStream, SimTruth};
use crate::solver::batch_fit;
use crate::stream::OnlineGam;

/// Write one estimate as CSV: a scalar record for beta0, one bandwidth
/// record per component (node = -1), then the grid rows
/// `component,node,beta,beta1` with beta1 the h-scaled derivative.
pub fn write_estimate_csv(path: &Path, grid: &GridSpec, est: &AdditiveEstimate) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "component,node,beta,beta1")?;
    writeln!(out, "0,0,{},0", est.intercept)?;
    for j in 0..grid.d {
        writeln!(out, "{},-1,{},0", j + 1, est.bandwidth[j])?;
    }
    for j in 0..grid.d {
        for i in 0..grid.m {
            writeln!(
                out,
                "{},{},{},{}",
                j + 1,
                grid.node(i),
                est.values[j][i],
                est.scaled_derivative(j, i)
            )?;
        }
    }
    Ok(())
}

/// Read an estimate CSV back (inverse of [`write_estimate_csv`]); derivative
/// coefficients are unscaled through the recorded bandwidth rows.
pub fn read_estimate_csv(path: &Path, grid: &GridSpec) -> Result<AdditiveEstimate> {
    let text = std::fs::read_to_string(path)?;
    let mut est = AdditiveEstimate::zero(grid, 1, vec![f64::NAN; grid.d]);
    for (ln, line) in text.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(OgamError::Parse {
                line: ln as u64 + 1,
                msg: format!("expected 4 fields, got {}", fields.len()),
            });
        }
        let parse = |v: &str| -> Result<f64> {
            v.trim().parse().map_err(|_| OgamError::Parse {
                line: ln as u64 + 1,
                msg: format!("bad number '{v}'"),
            })
        };
        let component: usize = fields[0].trim().parse().map_err(|_| OgamError::Parse {
            line: ln as u64 + 1,
            msg: format!("bad component '{}'", fields[0]),
        })?;
        let node = parse(fields[1])?;
        let beta = parse(fields[2])?;
        let beta1 = parse(fields[3])?;
        if component == 0 {
            est.intercept = beta;
        } else if node < 0.0 {
            est.bandwidth[component - 1] = beta;
        } else {
            let i = (node * (grid.m as f64 - 1.0)).round() as usize;
            est.values[component - 1][i] = beta;
            est.coeffs[component - 1][0][i] = beta1; // rescaled below
        }
    }
    for j in 0..grid.d {
        let h = est.bandwidth[j];
        if h.is_nan() || h <= 0.0 {
            return Err(OgamError::Parse {
                line: 0,
                msg: format!("estimate file lacks a bandwidth record for component {}", j + 1),
            });
        }
        for i in 0..grid.m {
            est.coeffs[j][0][i] /= h;
        }
    }
    Ok(est)
}

/// Generate the simulation stream and write it in the ingest format.
pub fn run_simulate(cfg: &RunConfig, out: &Path) -> Result<usize> {
    let stream = SimStream::new(cfg.sim())?;
    let file = BufWriter::new(File::create(out)?);
    let blocks = cfg.blocks;
    write_blocks_csv(file, stream)?;
    Ok(blocks)
}

/// Outcome of a streaming run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitSummary {
    pub blocks: usize,
    pub n_total: usize,
    pub diagnostics_path: PathBuf,
    pub final_estimate_path: PathBuf,
    pub snapshot_path: Option<PathBuf>,
    pub stored_sets: usize,
}

fn block_source(cfg: &RunConfig) -> Result<Box<dyn Iterator<Item = Result<DataBlock>>>> {
    if cfg.input.is_empty() {
        Ok(Box::new(SimStream::new(cfg.sim())?.map(Ok)))
    } else {
        let reader = BlockReader::open(Path::new(&cfg.input))?;
        if reader.dimensions() != cfg.d {
            return Err(OgamError::Config(format!(
                "input file has {} covariates, config says d = {}",
                reader.dimensions(),
                cfg.d
            )));
        }
        Ok(Box::new(reader))
    }
}

fn drive_stream(
    cfg: &RunConfig,
    gam: &mut OnlineGam,
    source: impl Iterator<Item = Result<DataBlock>>,
) -> Result<FitSummary> {
    fs::create_dir_all(&cfg.output_dir)?;
    let out_dir = Path::new(&cfg.output_dir);
    let diagnostics_path = out_dir.join("diagnostics.ndjson");
    let mut diag_out = BufWriter::new(File::create(&diagnostics_path)?);
    let grid = gam.grid();
    let mut blocks = 0usize;
    for block in source {
        let block = block?;
        let record = gam.process_block(&block)?;
        serde_json::to_writer(&mut diag_out, &record)
            .map_err(|e| OgamError::Io(std::io::Error::other(e)))?;
        diag_out.write_all(b"\n")?;
        blocks += 1;
        if cfg.emit_estimate_every > 0 && gam.k().is_multiple_of(cfg.emit_estimate_every) {
            let path = out_dir.join(format!("estimate_{:05}.csv", gam.k()));
            write_estimate_csv(&path, &grid, gam.main.estimate())?;
        }
    }
    diag_out.flush()?;
    let final_estimate_path = out_dir.join("estimate_final.csv");
    write_estimate_csv(&final_estimate_path, &grid, gam.main.estimate())?;
    let snapshot_path = if cfg.snapshot_out.is_empty() {
        None
    } else {
        let p = PathBuf::from(&cfg.snapshot_out);
        gam.save_snapshot(&p)?;
        Some(p)
    };
    Ok(FitSummary {
        blocks,
        n_total: gam.n_total(),
        diagnostics_path,
        final_estimate_path,
        snapshot_path,
        stored_sets: gam.main.state.sets.len(),
    })
}

/// Stream blocks from the configured source through a fresh estimator.
pub fn run_fit(cfg: &RunConfig) -> Result<FitSummary> {
    let mut gam = cfg.build_gam()?;
    let source = block_source(cfg)?;
    drive_stream(cfg, &mut gam, source)
}

/// Continue a snapshotted stream on more data.
pub fn run_resume(cfg: &RunConfig, snapshot: &Path) -> Result<FitSummary> {
    let mut gam = OnlineGam::load_snapshot(snapshot)?;
    if gam.grid().d != cfg.d {
        return Err(OgamError::Config(format!(
            "snapshot has d = {}, config says d = {}",
            gam.grid().d,
            cfg.d
        )));
    }
    let source = block_source(cfg)?;
    drive_stream(cfg, &mut gam, source)
}

/// Pooled batch fit; the bandwidth comes from `override_h`, the fixed
/// config value, or the pooled plug-in rule, in that order. When `compare`
/// names an estimate CSV (data mode, no truth), the per-component
/// integrated squared discrepancies against it are returned as well.
pub fn run_batch(
    cfg: &RunConfig,
    override_h: Option<Vec<f64>>,
    compare: Option<&Path>,
) -> Result<(PathBuf, Option<Vec<f64>>)> {
    let mut blocks = Vec::new();
    for b in block_source(cfg)? {
        blocks.push(b?);
    }
    let pooled = DataBlock::pooled(&blocks)?;
    let ctx = StatContext {
        grid: cfg.grid()?,
        kernel: cfg.kernel()?,
        family: cfg.family()?,
        degree: 1,
    };
    let h = match override_h {
        Some(h) => h,
        None if cfg.bandwidth_mode == "fixed" => cfg.fixed_bandwidth_vec()?,
        None => batch_plugin_bandwidth(
            ctx.grid,
            ctx.kernel,
            ctx.family,
            cfg.solver()?,
            cfg.pilot()?,
            &pooled,
        )?,
    };
    let (est, _) = batch_fit(&ctx, &pooled, &h, &cfg.solver()?)?;
    fs::create_dir_all(&cfg.output_dir)?;
    let path = Path::new(&cfg.output_dir).join("estimate_batch.csv");
    write_estimate_csv(&path, &ctx.grid, &est)?;
    let discrepancy = match compare {
        Some(other_path) => {
            let other = read_estimate_csv(other_path, &ctx.grid)?;
            Some(
                (0..ctx.grid.d)
                    .map(|j| crate::report::component_discrepancy(&ctx.grid, &other, &est, j))
                    .collect(),
            )
        }
        None => None,
    };
    Ok((path, discrepancy))
}

/// Bandwidth accuracy summary of the replicated study: median relative
/// error against the analytic optimum at an early and a late checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BandwidthTrend {
    pub k_early: usize,
    pub k_late: usize,
    /// Median over replications of |h_Kj / h*_Kj - 1| per axis.
    pub median_early: Vec<f64>,
    pub median_late: Vec<f64>,
}

/// Outcome of the replicated simulation study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyOutcome {
    pub efficiency: Vec<EfficiencyReport>,
    pub trend: BandwidthTrend,
    /// Per-replication component IMSEs of the online fits, `[l][rep][j]`.
    pub per_rep_online: Vec<Vec<Vec<f64>>>,
    /// Per-replication component IMSEs of the batch competitor, `[rep][j]`.
    pub per_rep_batch: Vec<Vec<f64>>,
    pub l_values: Vec<usize>,
}

impl StudyOutcome {
    /// Paired per-replication efficiency differences between two candidate
    /// lengths: mean and standard error of eff_r(l_to) - eff_r(l_from) for
    /// component `j`.
    pub fn paired_efficiency_shift(
        &self,
        l_from: usize,
        l_to: usize,
        j: usize,
    ) -> Option<(f64, f64)> {
        let ia = self.l_values.iter().position(|&l| l == l_from)?;
        let ib = self.l_values.iter().position(|&l| l == l_to)?;
        let reps = self.per_rep_batch.len();
        let diffs: Vec<f64> = (0..reps)
            .map(|r| {
                let batch = self.per_rep_batch[r][j];
                batch / self.per_rep_online[ib][r][j] - batch / self.per_rep_online[ia][r][j]
            })
            .collect();
        let mean = diffs.iter().sum::<f64>() / reps as f64;
        let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>()
            / (reps as f64 - 1.0).max(1.0);
        Some((mean, (var / reps as f64).sqrt()))
    }
}

/// Replicated efficiency study on the simulation design: for each L run the
/// full pilot-driven online estimator over an independent stream, fit the
/// batch competitor on the pooled data, and report per-component relative
/// efficiencies against the known truth plus the bandwidth trend.
pub fn run_report(cfg: &RunConfig, reps: usize, l_values: &[usize]) -> Result<StudyOutcome> {
    if reps == 0 || l_values.is_empty() {
        return Err(OgamError::Config("report needs reps >= 1 and L values".into()));
    }
    let grid = cfg.grid()?;
    let kernel = cfg.kernel()?;
    let family = cfg.family()?;
    let solver = cfg.solver()?;
    let truth = SimTruth::compute(401);
    let k_early = 20.min(cfg.blocks);
    let k_late = cfg.blocks;

    let d = grid.d;
    let mut per_rep_online = vec![Vec::with_capacity(reps); l_values.len()];
    let mut per_rep_batch = Vec::with_capacity(reps);
    let mut rel_err_early: Vec<Vec<f64>> = vec![Vec::new(); d];
    let mut rel_err_late: Vec<Vec<f64>> = vec![Vec::new(); d];

    for rep in 0..reps {
        let mut sim_cfg = cfg.sim();
        sim_cfg.seed = cfg.seed.wrapping_add(rep as u64);
        let blocks: Vec<DataBlock> = SimStream::new(sim_cfg)?.collect();

        for (li, &l) in l_values.iter().enumerate() {
            let mut run_cfg = cfg.clone();
            run_cfg.l = l;
            run_cfg.bandwidth_mode = "pilot".into();
            let mut gam = run_cfg.build_gam()?;
            for block in &blocks {
                let record = gam.process_block(block)?;
                // pilots do not depend on the main L; collect the trend once
                if li == 0 && (record.k == k_early || record.k == k_late) {
                    let h_star = truth.optimal_bandwidth(record.n_total, kernel);
                    for j in 0..d {
                        let rel = (record.h[j] / h_star[j] - 1.0).abs();
                        if record.k == k_early {
                            rel_err_early[j].push(rel);
                        } else {
                            rel_err_late[j].push(rel);
                        }
                    }
                }
            }
            let est = gam.main.estimate();
            per_rep_online[li].push(vec![
                component_imse(&grid, est, 0, sim::beta1_star),
                component_imse(&grid, est, 1, sim::beta2_star),
            ]);
        }

        let pooled = DataBlock::pooled(&blocks)?;
        let ctx = StatContext {
            grid,
            kernel,
            family,
            degree: 1,
        };
        let hb = batch_plugin_bandwidth(grid, kernel, family, solver, cfg.pilot()?, &pooled)?;
        let (bfit, _) = batch_fit(&ctx, &pooled, &hb, &solver)?;
        per_rep_batch.push(vec![
            component_imse(&grid, &bfit, 0, sim::beta1_star),
            component_imse(&grid, &bfit, 1, sim::beta2_star),
        ]);
    }

    let scale = 1.0 / reps as f64;
    let imse_batch: Vec<f64> = (0..d)
        .map(|j| per_rep_batch.iter().map(|r| r[j]).sum::<f64>() * scale)
        .collect();
    let mut efficiency = Vec::new();
    for (li, &l) in l_values.iter().enumerate() {
        let online: Vec<f64> = (0..d)
            .map(|j| per_rep_online[li].iter().map(|r| r[j]).sum::<f64>() * scale)
            .collect();
        efficiency.push(EfficiencyReport::from_accumulated(
            l,
            reps,
            online,
            imse_batch.clone(),
        )?);
    }

    let median = |v: &mut Vec<f64>| -> f64 {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if v.is_empty() {
            f64::NAN
        } else {
            v[v.len() / 2]
        }
    };
    let trend = BandwidthTrend {
        k_early,
        k_late,
        median_early: rel_err_early.iter_mut().map(median).collect(),
        median_late: rel_err_late.iter_mut().map(median).collect(),
    };
    Ok(StudyOutcome {
        efficiency,
        trend,
        per_rep_online,
        per_rep_batch,
        l_values: l_values.to_vec(),
    })
}

/// Write the study outcome as CSV tables plus a JSON copy.
pub fn write_study(out_dir: &Path, outcome: &StudyOutcome) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let mut eff = BufWriter::new(File::create(out_dir.join("efficiency.csv"))?);
    writeln!(eff, "l,component,imse_online,imse_batch,efficiency,bound")?;
    for rep in &outcome.efficiency {
        for j in 0..rep.efficiency.len() {
            writeln!(
                eff,
                "{},{},{},{},{},{}",
                rep.l,
                j + 1,
                rep.imse_online[j],
                rep.imse_batch[j],
                rep.efficiency[j],
                rep.bound
            )?;
        }
    }
    let mut trend = BufWriter::new(File::create(out_dir.join("bandwidth_trend.csv"))?);
    writeln!(trend, "component,k_early,median_rel_err_early,k_late,median_rel_err_late")?;
    for j in 0..outcome.trend.median_early.len() {
        writeln!(
            trend,
            "{},{},{},{},{}",
            j + 1,
            outcome.trend.k_early,
            outcome.trend.median_early[j],
            outcome.trend.k_late,
            outcome.trend.median_late[j]
        )?;
    }
    let json = File::create(out_dir.join("study.json"))?;
    serde_json::to_writer_pretty(BufWriter::new(json), outcome)
        .map_err(|e| OgamError::Io(std::io::Error::other(e)))?;
    Ok(())
}
