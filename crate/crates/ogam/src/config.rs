//! Run configuration: a flat key-value file (TOML syntax) with every field
//! addressable, strict about unknown keys, plus command-line overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bandwidth::PilotConfig;
use crate::error::{OgamError, Result};
use crate::family::Family;
use crate::grid::{GridSpec, KernelSpec};
use crate::sim::SimConfig;
use crate::solver::SolverConfig;
use crate::stream::{BandwidthMode, OnlineGam};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub family: String,
    pub d: usize,
    pub grid_m: usize,
    pub kernel: String,
    /// Candidate sequence length of the main fit.
    pub l: usize,
    /// Candidate sequence length of the pilot fits.
    pub l_pilot: usize,
    pub g: f64,
    pub r: f64,
    pub eps_outer: f64,
    pub eps_inner: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub divergence_guard: f64,
    /// "pilot", "fixed" or "schedule".
    pub bandwidth_mode: String,
    /// Used by mode "fixed"; a single value broadcasts over axes.
    #[serde(deserialize_with = "scalar_or_vec")]
    pub fixed_bandwidth: Vec<f64>,
    /// Used by mode "schedule": CSV with one `h1,...,hd` row per block.
    pub schedule_file: String,
    /// Input CSV path; empty selects the built-in simulation stream.
    pub input: String,
    pub output_dir: String,
    pub seed: u64,
    /// Simulation stream length when `input` is empty.
    pub blocks: usize,
    pub block_size_mean: f64,
    pub block_size_sd: f64,
    /// Estimate CSV cadence; 0 writes only the final estimate.
    pub emit_estimate_every: usize,
    /// Snapshot path written after the stream completes; empty disables.
    pub snapshot_out: String,
}

fn scalar_or_vec<'de, D>(deserializer: D) -> std::result::Result<Vec<f64>, D::Error>
where
    D: serde::Deserializer<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(f64),
        Many(Vec<f64>),
    }
    Ok(match OneOrMany::deserialize(deserializer)? {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(v) => v,
    })
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            family: "poisson-log".into(),
            d: 2,
            grid_m: 41,
            kernel: "epanechnikov".into(),
            l: 10,
            l_pilot: 10,
            g: 0.5,
            r: 0.5,
            eps_outer: 1e-6,
            eps_inner: 1e-8,
            max_outer: 50,
            max_inner: 100,
            divergence_guard: 1e3,
            bandwidth_mode: "pilot".into(),
            fixed_bandwidth: vec![0.15],
            schedule_file: String::new(),
            input: String::new(),
            output_dir: "out".into(),
            seed: 1,
            blocks: 200,
            block_size_mean: 100.0,
            block_size_sd: 10.0,
            emit_estimate_every: 0,
            snapshot_out: String::new(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| OgamError::Config(e.to_string()))
    }

    /// Apply `key=value` overrides on top of the file values; values use the
    /// same syntax as the config file.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        if overrides.is_empty() {
            return Ok(());
        }
        let mut table = toml::Table::try_from(self.clone())
            .map_err(|e| OgamError::Config(e.to_string()))?;
        for item in overrides {
            let (key, value) = item.split_once('=').ok_or_else(|| {
                OgamError::Config(format!("override '{item}' is not key=value"))
            })?;
            let key = key.trim();
            if !table.contains_key(key) {
                return Err(OgamError::Config(format!("unknown config key '{key}'")));
            }
            // parse the value with TOML syntax; bare words become strings
            let doc = format!("v = {}", value.trim());
            let parsed = match doc.parse::<toml::Table>() {
                Ok(mut t) => t.remove("v").unwrap(),
                Err(_) => toml::Value::String(value.trim().to_string()),
            };
            table.insert(key.to_string(), parsed);
        }
        *self = table
            .try_into()
            .map_err(|e: toml::de::Error| OgamError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn family(&self) -> Result<Family> {
        Family::from_name(&self.family)
    }

    pub fn kernel(&self) -> Result<KernelSpec> {
        KernelSpec::from_name(&self.kernel)
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.d, self.grid_m)
    }

    pub fn solver(&self) -> Result<SolverConfig> {
        if self.eps_outer <= 0.0 || self.eps_inner <= 0.0 {
            return Err(OgamError::Config("tolerances must be positive".into()));
        }
        if self.max_outer < 1 || self.max_inner < 1 {
            return Err(OgamError::Config("iteration caps must be >= 1".into()));
        }
        Ok(SolverConfig {
            eps_outer: self.eps_outer,
            eps_inner: self.eps_inner,
            max_outer: self.max_outer,
            max_inner: self.max_inner,
            divergence_guard: self.divergence_guard,
        })
    }

    pub fn pilot(&self) -> Result<PilotConfig> {
        if self.g <= 0.0 || self.r <= 0.0 {
            return Err(OgamError::Config("pilot constants G, R must be positive".into()));
        }
        if self.l_pilot < 1 {
            return Err(OgamError::Config("pilot candidate length must be >= 1".into()));
        }
        Ok(PilotConfig {
            l_prime: self.l_pilot,
            g: self.g,
            r: self.r,
        })
    }

    /// Expand `fixed_bandwidth` to one entry per axis.
    pub fn fixed_bandwidth_vec(&self) -> Result<Vec<f64>> {
        let h = match self.fixed_bandwidth.len() {
            1 => vec![self.fixed_bandwidth[0]; self.d],
            n if n == self.d => self.fixed_bandwidth.clone(),
            n => {
                return Err(OgamError::Config(format!(
                    "fixed_bandwidth has {n} entries for d = {}",
                    self.d
                )))
            }
        };
        if let Some(&bad) = h.iter().find(|&&v| v.is_nan() || v <= 0.0 || v > 1.0) {
            return Err(OgamError::InvalidBandwidth(bad));
        }
        Ok(h)
    }

    pub fn bandwidth_mode(&self) -> Result<BandwidthMode> {
        match self.bandwidth_mode.as_str() {
            "pilot" => Ok(BandwidthMode::Pilot),
            "fixed" => Ok(BandwidthMode::Fixed(self.fixed_bandwidth_vec()?)),
            "schedule" => {
                if self.schedule_file.is_empty() {
                    return Err(OgamError::Config(
                        "bandwidth_mode = \"schedule\" needs schedule_file".into(),
                    ));
                }
                let text = std::fs::read_to_string(&self.schedule_file)?;
                let mut schedule = Vec::new();
                for (ln, line) in text.lines().enumerate() {
                    let line = line.trim();
                    if line.is_empty() || line.starts_with('#') {
                        continue;
                    }
                    let row: Vec<f64> = line
                        .split(',')
                        .map(|v| {
                            v.trim().parse::<f64>().map_err(|_| OgamError::Parse {
                                line: ln as u64 + 1,
                                msg: format!("bad bandwidth '{v}'"),
                            })
                        })
                        .collect::<Result<_>>()?;
                    if row.len() != self.d {
                        return Err(OgamError::Parse {
                            line: ln as u64 + 1,
                            msg: format!("expected {} bandwidths, got {}", self.d, row.len()),
                        });
                    }
                    schedule.push(row);
                }
                Ok(BandwidthMode::Schedule(schedule))
            }
            other => Err(OgamError::Config(format!(
                "unknown bandwidth_mode '{other}' (pilot | fixed | schedule)"
            ))),
        }
    }

    pub fn sim(&self) -> SimConfig {
        SimConfig {
            seed: self.seed,
            blocks: self.blocks,
            block_size_mean: self.block_size_mean,
            block_size_sd: self.block_size_sd,
        }
    }

    /// Validate everything and build the streaming estimator.
    pub fn build_gam(&self) -> Result<OnlineGam> {
        OnlineGam::new(
            self.grid()?,
            self.kernel()?,
            self.family()?,
            self.l.max(1),
            self.solver()?,
            self.bandwidth_mode()?,
            self.pilot()?,
        )
    }
}
