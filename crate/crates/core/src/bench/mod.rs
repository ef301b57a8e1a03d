//! Benchmark harness: grid search and repeated trials of the non-private,
//! DP-SGD and PAC trainers at matched posterior success rates, and the
//! JSON/CSV/plot-data reports.

mod report;
mod run;
mod seeds;
mod spec;
mod stats;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use report::{emit_report, write_results_dir, PlotData, PlotPoint, PlotSeries, ReportFormat};
pub use run::{
    evaluate, grid_search, run_benchmark, run_benchmark_on, run_dpsgd_cell, run_non_private_cell,
    run_pac_cell, run_pac_cell_with_profile, select_best, CellResult, GridOutcome, PacCandidate,
    TrialContext, MAX_FAILED_FRACTION,
};
pub use seeds::{derive_seed, splitmix64, tag};
pub use spec::{
    power_of_two_lambdas, DatasetRef, DpGrid, DpPoint, ExperimentSpec, Method, PacGrid, PacSettings,
    SplitSpec,
};
pub use stats::{mean, std_population, variance_sample, welch_greater, WelchTest};

use crate::dataio::DataError;
use crate::dp::{Init, Sampling};
use crate::pac::PacError;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid experiment spec:\n  {}", problems.join("\n  "))]
    Spec { problems: Vec<String> },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Pac(#[from] PacError),
    #[error("every grid point failed: {0}")]
    AllGridPointsFailed(String),
    #[error("cannot write {path}: {message}")]
    Write { path: std::path::PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub master_seed: u64,
    pub trials: usize,
    pub delta: f64,
    pub normalization: bool,
    pub split: SplitSpec,
    pub n_train: usize,
    pub n_test: usize,
    pub n_features: usize,
    pub methods: Vec<Method>,
    pub psr_levels: Vec<f64>,
    pub pac: PacSettings,
    pub dp_sampling: Sampling,
    pub dp_init: Init,
    pub elapsed_seconds: f64,
}

/// Outcome of a benchmark on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub dataset: String,
    pub metadata: ReportMetadata,
    /// Best grid cell per (method, psr), with per-trial values.
    pub results: Vec<CellResult>,
    /// Non-private fit on the same split.
    pub reference: CellResult,
    /// Every evaluated grid cell, summaries only.
    pub grid: Vec<CellResult>,
}

impl TrialReport {
    pub fn result(&self, method: Method, psr: f64) -> Option<&CellResult> {
        self.results
            .iter()
            .find(|c| c.method == method && (c.psr - psr).abs() < 1e-12)
    }
}
