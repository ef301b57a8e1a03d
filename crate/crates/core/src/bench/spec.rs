use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::dataio::DatasetManifest;
use crate::dp::{Init, Sampling};
use crate::pac::{NoiseMode, PacEstimationConfig, ProjectionChoice};
use crate::regression::{FitKind, FitSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    NonPrivate,
    Dpsgd,
    Pac,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::NonPrivate, Method::Dpsgd, Method::Pac];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::NonPrivate => "non_private",
            Method::Dpsgd => "dpsgd",
            Method::Pac => "pac",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Either a path to a manifest file or the manifest itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetRef {
    Path(PathBuf),
    Inline(DatasetManifest),
}

impl DatasetRef {
    /// Resolves relative paths against `base` (normally the spec file's directory).
    pub fn resolve(&self, base: Option<&Path>) -> Result<DatasetManifest, BenchError> {
        match self {
            DatasetRef::Path(p) => {
                let full = match base {
                    Some(b) if p.is_relative() => b.join(p),
                    _ => p.clone(),
                };
                Ok(DatasetManifest::from_file(full)?)
            }
            DatasetRef::Inline(m) => {
                let mut m = m.clone();
                if let Some(b) = base {
                    if m.path.is_relative() {
                        m.path = b.join(&m.path);
                    }
                }
                Ok(m)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DpGrid {
    pub learning_rates: Vec<f64>,
    pub batch_sizes: Vec<usize>,
    pub clip_norms: Vec<f64>,
    pub epochs: Vec<usize>,
    pub sampling: Sampling,
    pub init: Init,
}

impl Default for DpGrid {
    fn default() -> Self {
        Self {
            learning_rates: vec![0.001, 0.01, 0.1],
            batch_sizes: vec![8, 16, 32],
            clip_norms: vec![0.1, 1.0, 10.0],
            epochs: vec![10, 20, 50],
            sampling: Sampling::Poisson,
            init: Init::Zeros,
        }
    }
}

/// One DP-SGD grid point before noise calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpPoint {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub epochs: usize,
}

impl DpGrid {
    /// Points in lexicographic order of (learning rate, batch, clip, epochs).
    pub fn points(&self) -> Vec<DpPoint> {
        let mut out = Vec::new();
        for &learning_rate in &self.learning_rates {
            for &batch_size in &self.batch_sizes {
                for &clip_norm in &self.clip_norms {
                    for &epochs in &self.epochs {
                        out.push(DpPoint {
                            learning_rate,
                            batch_size,
                            clip_norm,
                            epochs,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PacGrid {
    pub kinds: Vec<FitKind>,
    /// Penalties tried for ridge and lasso.
    pub lambdas: Vec<f64>,
}

pub fn power_of_two_lambdas(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|k| 2f64.powi(k)).collect()
}

impl Default for PacGrid {
    fn default() -> Self {
        Self {
            kinds: vec![FitKind::Ols, FitKind::Ridge, FitKind::Lasso],
            lambdas: power_of_two_lambdas(-10, 10),
        }
    }
}

impl PacGrid {
    /// OLS first, then each penalized kind over ascending λ.
    pub fn points(&self) -> Vec<FitSpec> {
        let mut out = Vec::new();
        for kind in &self.kinds {
            match kind {
                FitKind::Ols => out.push(FitSpec::ols()),
                FitKind::Ridge => out.extend(self.lambdas.iter().map(|&l| FitSpec::ridge(l))),
                FitKind::Lasso => out.extend(self.lambdas.iter().map(|&l| FitSpec::lasso(l))),
            }
        }
        out
    }
}

/// Estimation settings shared by every PAC grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PacSettings {
    pub mode: NoiseMode,
    pub projection: ProjectionChoice,
    pub convergence_threshold: f64,
    pub min_rounds: usize,
    pub max_rounds: usize,
    pub max_instances: Option<usize>,
}

impl Default for PacSettings {
    fn default() -> Self {
        let d = PacEstimationConfig::default();
        Self {
            mode: d.mode,
            projection: d.projection,
            convergence_threshold: d.convergence_threshold,
            min_rounds: d.min_rounds,
            max_rounds: d.max_rounds,
            max_instances: Some(250),
        }
    }
}

impl PacSettings {
    pub fn estimation_config(&self, mi_budget: f64, seed: u64) -> PacEstimationConfig {
        PacEstimationConfig {
            sampling_rate: 0.5,
            convergence_threshold: self.convergence_threshold,
            min_rounds: self.min_rounds,
            max_rounds: self.max_rounds,
            projection: self.projection,
            mi_budget,
            mode: self.mode,
            max_instances: self.max_instances,
            seed,
        }
    }
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn default_psr_levels() -> Vec<f64> {
    vec![0.52, 0.55, 0.65, 0.75, 0.85, 0.95, 0.98]
}

fn default_trials() -> usize {
    50
}

fn default_true() -> bool {
    true
}

fn default_delta() -> f64 {
    1e-5
}

fn default_non_private() -> FitSpec {
    FitSpec::ols()
}

/// A full benchmark run on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub name: Option<String>,
    pub dataset: DatasetRef,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_psr_levels")]
    pub psr_levels: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub dp_grid: DpGrid,
    #[serde(default)]
    pub pac_grid: PacGrid,
    #[serde(default)]
    pub pac: PacSettings,
    #[serde(default = "default_non_private")]
    pub non_private: FitSpec,
    #[serde(default = "default_true")]
    pub normalization: bool,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default)]
    pub seed: u64,
    /// Directory relative dataset paths resolve against; set when loading from a file.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn new(dataset: DatasetRef) -> Self {
        Self {
            name: None,
            dataset,
            methods: default_methods(),
            psr_levels: default_psr_levels(),
            trials: default_trials(),
            delta: default_delta(),
            dp_grid: DpGrid::default(),
            pac_grid: PacGrid::default(),
            pac: PacSettings::default(),
            non_private: default_non_private(),
            normalization: true,
            split: SplitSpec::default(),
            seed: 0,
            base_dir: None,
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, BenchError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::Spec {
            problems: vec![format!("cannot read {}: {e}", path.display())],
        })?;
        let mut spec: Self = serde_json::from_str(&text).map_err(|e| BenchError::Spec {
            problems: vec![format!("{}: {e}", path.display())],
        })?;
        spec.base_dir = path.parent().map(Path::to_path_buf);
        Ok(spec)
    }

    pub fn manifest(&self) -> Result<DatasetManifest, BenchError> {
        self.dataset.resolve(self.base_dir.as_deref())
    }

    /// Every problem with the spec, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.trials == 0 {
            out.push("trials must be at least 1".to_string());
        }
        if self.methods.is_empty() {
            out.push("methods must not be empty".to_string());
        }
        if self.psr_levels.is_empty() {
            out.push("psr_levels must not be empty".to_string());
        }
        for p in &self.psr_levels {
            if !(*p > 0.5 && *p < 1.0) {
                out.push(format!("psr level {p} is outside (0.5, 1)"));
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            out.push(format!("delta {} is outside (0, 1)", self.delta));
        }
        if !(self.split.test_fraction > 0.0 && self.split.test_fraction < 1.0) {
            out.push(format!("split.test_fraction {} is outside (0, 1)", self.split.test_fraction));
        }
        if self.methods.contains(&Method::Dpsgd) {
            let g = &self.dp_grid;
            if g.learning_rates.is_empty() || g.batch_sizes.is_empty() || g.clip_norms.is_empty() || g.epochs.is_empty() {
                out.push("dp_grid has an empty axis".to_string());
            }
            if g.learning_rates.iter().any(|v| !(*v > 0.0)) {
                out.push("dp_grid.learning_rates must be positive".to_string());
            }
            if g.batch_sizes.contains(&0) {
                out.push("dp_grid.batch_sizes must be at least 1".to_string());
            }
            if g.clip_norms.iter().any(|v| !(*v > 0.0)) {
                out.push("dp_grid.clip_norms must be positive".to_string());
            }
            if g.epochs.contains(&0) {
                out.push("dp_grid.epochs must be at least 1".to_string());
            }
        }
        if self.methods.contains(&Method::Pac) {
            let points = self.pac_grid.points();
            if points.is_empty() {
                out.push("pac_grid yields no fit specifications".to_string());
            }
            if self.pac_grid.lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
                out.push("pac_grid.lambdas must be finite and non-negative".to_string());
            }
            if let Err(e) = self.pac.estimation_config(1.0, 0).validate() {
                out.push(format!("pac: {e}"));
            }
        }
        if let Err(e) = self.non_private.validate() {
            out.push(format!("non_private: {e}"));
        }
        out
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(BenchError::Spec { problems })
        }
    }
}
