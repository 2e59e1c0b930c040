//! Command-line surface for the streaming GAM estimator.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ogam::bench::run_bench;
use ogam::cli::{run_batch, run_fit, run_report, run_resume, run_simulate, write_study};
use ogam::config::RunConfig;

#[derive(Parser)]
#[command(name = "ogam", version, about = "Online smooth backfitting for generalized additive models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Flat key-value config file (TOML syntax).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config field, e.g. --set l=5 --set family="poisson-log".
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Input CSV (block,y,x1,...,xd); empty uses the simulation stream.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self) -> ogam::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        cfg.apply_overrides(&self.set)?;
        if let Some(input) = &self.input {
            cfg.input = input.to_string_lossy().into_owned();
        }
        if let Some(dir) = &self.output_dir {
            cfg.output_dir = dir.to_string_lossy().into_owned();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the simulation stream as an ingest-format CSV.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Stream blocks through the online estimator.
    Fit {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Classical smooth backfitting on the pooled data.
    Batch {
        #[command(flatten)]
        config: ConfigArgs,
        /// Bandwidth per axis, comma separated; default is the pooled
        /// plug-in rule (or the fixed config value).
        #[arg(long)]
        bandwidth: Option<String>,
        /// Estimate CSV to compare against (per-component integrated
        /// squared discrepancy is reported).
        #[arg(long)]
        compare: Option<PathBuf>,
    },
    /// Replicated simulation study: relative efficiency and bandwidth trend.
    Report {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        /// Candidate lengths, comma separated.
        #[arg(long, default_value = "3,5,10")]
        l_list: String,
    },
    /// Wall-clock comparison of online updates and batch refits.
    Bench {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "5,10,20")]
        l_list: String,
        /// Checkpoints (block counts) at which times are recorded.
        #[arg(long, default_value = "20,50,100,200")]
        checkpoints: String,
        /// Skip the batch refits.
        #[arg(long)]
        no_batch: bool,
    },
    /// Resume a snapshotted stream on more data.
    Resume {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        snapshot: PathBuf,
    },
}

fn parse_usize_list(text: &str) -> ogam::Result<Vec<usize>> {
    text.split(',')
        .map(|v| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| ogam::OgamError::Config(format!("bad list entry '{v}'")))
        })
        .collect()
}

fn run() -> ogam::Result<()> {
    match Cli::parse().command {
        Command::Simulate { config, out } => {
            let cfg = config.resolve()?;
            let blocks = run_simulate(&cfg, &out)?;
            println!("wrote {blocks} blocks to {}", out.display());
        }
        Command::Fit { config } => {
            let cfg = config.resolve()?;
            let summary = run_fit(&cfg)?;
            println!(
                "processed {} blocks ({} observations); estimate at {}, diagnostics at {}",
                summary.blocks,
                summary.n_total,
                summary.final_estimate_path.display(),
                summary.diagnostics_path.display()
            );
            if let Some(snap) = summary.snapshot_path {
                println!("snapshot saved to {}", snap.display());
            }
        }
        Command::Batch {
            config,
            bandwidth,
            compare,
        } => {
            let cfg = config.resolve()?;
            let h = match bandwidth {
                Some(text) => Some(
                    text.split(',')
                        .map(|v| {
                            v.trim().parse::<f64>().map_err(|_| {
                                ogam::OgamError::Config(format!("bad bandwidth '{v}'"))
                            })
                        })
                        .collect::<ogam::Result<Vec<f64>>>()?,
                ),
                None => None,
            };
            let (path, discrepancy) = run_batch(&cfg, h, compare.as_deref())?;
            println!("batch estimate written to {}", path.display());
            if let Some(d) = discrepancy {
                println!("integrated squared discrepancy vs compared fit: {d:?}");
            }
        }
        Command::Report {
            config,
            reps,
            l_list,
        } => {
            let cfg = config.resolve()?;
            let l_values = parse_usize_list(&l_list)?;
            let outcome = run_report(&cfg, reps, &l_values)?;
            write_study(std::path::Path::new(&cfg.output_dir), &outcome)?;
            for rep in &outcome.efficiency {
                println!(
                    "L = {:>3}: eff = {:?} (bound {:.5})",
                    rep.l, rep.efficiency, rep.bound
                );
            }
            println!(
                "bandwidth trend: median |h/h*-1| at K={}: {:?}; at K={}: {:?}",
                outcome.trend.k_early,
                outcome.trend.median_early,
                outcome.trend.k_late,
                outcome.trend.median_late
            );
            println!("tables written to {}", cfg.output_dir);
        }
        Command::Bench {
            config,
            l_list,
            checkpoints,
            no_batch,
        } => {
            let cfg = config.resolve()?;
            let l_values = parse_usize_list(&l_list)?;
            let marks = parse_usize_list(&checkpoints)?;
            let report = run_bench(
                cfg.grid()?,
                cfg.kernel()?,
                cfg.family()?,
                cfg.solver()?,
                cfg.sim(),
                &l_values,
                &marks,
                !no_batch,
            )?;
            std::fs::create_dir_all(&cfg.output_dir)?;
            let path = std::path::Path::new(&cfg.output_dir).join("bench.csv");
            report.to_csv(std::fs::File::create(&path)?)?;
            for row in &report.rows {
                println!(
                    "L = {:>3} K = {:>4}: online {:.4}s/block{}",
                    row.l,
                    row.k,
                    row.online_block_seconds,
                    row.batch_seconds
                        .map(|b| format!(", batch refit {b:.3}s"))
                        .unwrap_or_default()
                );
            }
            println!("timing table written to {}", path.display());
        }
        Command::Resume { config, snapshot } => {
            let cfg = config.resolve()?;
            let summary = run_resume(&cfg, &snapshot)?;
            println!(
                "resumed stream: +{} blocks (total {} observations); estimate at {}",
                summary.blocks,
                summary.n_total,
                summary.final_estimate_path.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
