//! Streaming estimation of generalized additive models by online smooth
//! backfitting.
//!
//! Incoming data blocks update a constant-size collection of grid-valued
//! sufficient statistics through a dynamic candidate-bandwidth scheme; a
//! double-loop solver (outer linearization, inner Gauss-Seidel sweep) turns
//! the statistics plus the current block into component-function estimates
//! without revisiting past data. A classical batch smooth-backfitting fit on
//! pooled data is included as the reference competitor.

// dense kernels index several parallel arrays; range loops are the clearer form
#![allow(clippy::needless_range_loop)]

pub mod bandwidth;
pub mod bench;
pub mod blockstats;
pub mod cli;
pub mod config;
pub mod error;
pub mod estimate;
pub mod family;
pub mod field;
pub mod grid;
pub mod ingest;
pub mod report;
pub mod sim;
pub mod solver;
pub mod store;
pub mod stream;

pub use bandwidth::{online_bandwidth, BandwidthReport, PilotConfig, PilotState};
pub use blockstats::{DataBlock, StatContext, SubStatistics};
pub use config::RunConfig;
pub use error::{OgamError, Result};
pub use estimate::AdditiveEstimate;
pub use family::Family;
pub use grid::{kernel_weights, GridSpec, KernelSpec};
pub use report::efficiency_lower_bound;
pub use solver::{batch_fit, init_parametric, FitDiagnostics, OnlineFit, SolverConfig};
pub use store::{candidate_sequence, match_index, StatisticsSet, StreamState};
pub use stream::{BandwidthMode, DiagnosticsRecord, OnlineGam};
