use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::seeds::{derive_seed, tag};
use super::spec::{DpPoint, ExperimentSpec, Method};
use super::stats::{mean, std_population};
use super::{BenchError, ReportMetadata, TrialReport};
use crate::dataio::{prepare, Dataset, PreparedData};
use crate::dp::{dpsgd_train, DpSgdConfig, DpTrainingConfig};
use crate::pac::{add_noise, estimate_deviations, DeviationEstimate, NoiseProfile, PrivacyLevel};
use crate::regression::{predict, r_squared, rmse, Coefficients, FitSpec};

/// Largest fraction of failed trials a cell may have and still count.
pub const MAX_FAILED_FRACTION: f64 = 0.1;

/// Aggregated test-set metrics for one (method, privacy level, configuration).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub method: Method,
    pub psr: f64,
    pub epsilon: f64,
    pub mi: f64,
    pub config: serde_json::Value,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub r2_mean: f64,
    pub r2_std: f64,
    /// Successful trials.
    pub n_trials: usize,
    pub failed: usize,
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rmse: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub r2: Vec<f64>,
}

impl CellResult {
    pub fn from_trials(
        method: Method,
        level: &PrivacyLevel,
        config: serde_json::Value,
        outcomes: Vec<Result<(f64, f64), String>>,
    ) -> Self {
        let total = outcomes.len();
        let mut rmse = Vec::with_capacity(total);
        let mut r2 = Vec::with_capacity(total);
        let mut error = None;
        for o in outcomes {
            match o {
                Ok((a, b)) if a.is_finite() && b.is_finite() => {
                    rmse.push(a);
                    r2.push(b);
                }
                Ok(_) => {
                    error.get_or_insert_with(|| "non-finite metrics".to_string());
                }
                Err(e) => {
                    error.get_or_insert(e);
                }
            }
        }
        let failed = total - rmse.len();
        let valid = !rmse.is_empty() && failed as f64 <= MAX_FAILED_FRACTION * total as f64;
        let stat = |xs: &[f64], f: fn(&[f64]) -> f64| if xs.is_empty() { f64::NAN } else { f(xs) };
        Self {
            method,
            psr: level.psr,
            epsilon: level.epsilon_equiv,
            mi: level.mi,
            config,
            rmse_mean: stat(&rmse, mean),
            rmse_std: stat(&rmse, std_population),
            r2_mean: stat(&r2, mean),
            r2_std: stat(&r2, std_population),
            n_trials: rmse.len(),
            failed,
            valid,
            error,
            rmse,
            r2,
        }
    }

    pub fn invalid(method: Method, level: &PrivacyLevel, config: serde_json::Value, error: String) -> Self {
        let mut cell = Self::from_trials(method, level, config, vec![]);
        cell.error = Some(error);
        cell
    }

    /// Copy without per-trial values.
    pub fn summary(&self) -> Self {
        Self {
            rmse: Vec::new(),
            r2: Vec::new(),
            ..self.clone()
        }
    }
}

/// Test-set RMSE and R² of a model.
pub fn evaluate(model: &Coefficients, test: &Dataset) -> Result<(f64, f64), String> {
    if !model.is_finite() {
        return Err("model has non-finite parameters".into());
    }
    let y_hat = predict(model, &test.features).map_err(|e| e.to_string())?;
    let a = rmse(&test.labels, &y_hat).map_err(|e| e.to_string())?;
    let b = r_squared(&test.labels, &y_hat).map_err(|e| e.to_string())?;
    Ok((a, b))
}

/// Inputs shared by every cell of a run.
#[derive(Debug, Clone)]
pub struct TrialContext<'a> {
    pub data: &'a PreparedData,
    pub trials: usize,
    pub master_seed: u64,
}

impl TrialContext<'_> {
    fn trial_seed(&self, method: Method, level: &PrivacyLevel, point: usize, trial: usize) -> u64 {
        derive_seed(
            self.master_seed,
            &[tag(method.as_str()), level.psr.to_bits(), point as u64, trial as u64],
        )
    }
}

/// The deterministic baseline; every trial has the same value.
pub fn run_non_private_cell(ctx: &TrialContext<'_>, fit: &FitSpec, level: &PrivacyLevel) -> CellResult {
    let config = serde_json::to_value(fit).expect("fit spec serializes");
    let outcome = fit
        .fit_dataset(&ctx.data.train)
        .map_err(|e| e.to_string())
        .and_then(|f| evaluate(&f.coefficients, &ctx.data.test));
    CellResult::from_trials(Method::NonPrivate, level, config, vec![outcome; ctx.trials])
}

/// DP-SGD at one grid point: σ is calibrated once, trials differ in all training randomness.
pub fn run_dpsgd_cell(
    ctx: &TrialContext<'_>,
    point: &DpPoint,
    base: &DpTrainingConfig,
    level: &PrivacyLevel,
    point_index: usize,
) -> CellResult {
    let request = DpTrainingConfig {
        learning_rate: point.learning_rate,
        batch_size: point.batch_size,
        epochs: point.epochs,
        clip_norm: point.clip_norm,
        epsilon: level.epsilon_equiv,
        delta: level.delta_equiv,
        ..*base
    };
    let n = ctx.data.train.n();
    let calibrated: DpSgdConfig = match request.calibrate(n) {
        Ok(c) => c,
        Err(e) => {
            let config = serde_json::to_value(request).expect("config serializes");
            return CellResult::invalid(Method::Dpsgd, level, config, e.to_string());
        }
    };
    let mut config = serde_json::to_value(request).expect("config serializes");
    config["noise_multiplier"] = calibrated.noise_multiplier.into();
    config["steps"] = calibrated.steps(n).into();
    let outcomes = (0..ctx.trials)
        .into_par_iter()
        .map(|t| {
            let cfg = DpSgdConfig {
                seed: ctx.trial_seed(Method::Dpsgd, level, point_index, t),
                ..calibrated
            };
            dpsgd_train(&ctx.data.train, &cfg)
                .map_err(|e| e.to_string())
                .and_then(|m| evaluate(&m, &ctx.data.test))
        })
        .collect();
    CellResult::from_trials(Method::Dpsgd, level, config, outcomes)
}

/// A PAC grid point with its privacy-independent parts computed.
#[derive(Debug, Clone)]
pub struct PacCandidate {
    pub fit: FitSpec,
    pub prepared: Result<(DeviationEstimate, Coefficients), String>,
}

impl PacCandidate {
    /// Measures output sensitivity and fits the unperturbed model once.
    pub fn build(data: &Dataset, fit: FitSpec, spec: &ExperimentSpec, point_index: usize) -> Self {
        let seed = derive_seed(spec.seed, &[tag("pac-estimate"), point_index as u64]);
        let config = spec.pac.estimation_config(1.0, seed);
        let prepared = estimate_deviations(data, &fit, &config)
            .map_err(|e| e.to_string())
            .and_then(|est| {
                let model = fit.fit_dataset(data).map_err(|e| e.to_string())?.coefficients;
                Ok((est, model))
            });
        Self { fit, prepared }
    }
}

/// PAC trials for a fixed noise profile: only the Gaussian draw varies.
pub fn run_pac_cell_with_profile(
    ctx: &TrialContext<'_>,
    model: &Coefficients,
    profile: &NoiseProfile,
    level: &PrivacyLevel,
    config: serde_json::Value,
    point_index: usize,
) -> CellResult {
    let outcomes = (0..ctx.trials)
        .into_par_iter()
        .map(|t| {
            let seed = ctx.trial_seed(Method::Pac, level, point_index, t);
            add_noise(model, profile, seed)
                .map_err(|e| e.to_string())
                .and_then(|m| evaluate(&m, &ctx.data.test))
        })
        .collect();
    CellResult::from_trials(Method::Pac, level, config, outcomes)
}

pub fn run_pac_cell(
    ctx: &TrialContext<'_>,
    candidate: &PacCandidate,
    spec: &ExperimentSpec,
    level: &PrivacyLevel,
    point_index: usize,
) -> CellResult {
    let mut config = serde_json::json!({
        "fit": candidate.fit,
        "mode": spec.pac.mode,
        "projection": spec.pac.projection,
    });
    let (est, model) = match &candidate.prepared {
        Ok(p) => p,
        Err(e) => return CellResult::invalid(Method::Pac, level, config, e.clone()),
    };
    let profile = match est.profile(level.mi) {
        Ok(p) => p,
        Err(e) => return CellResult::invalid(Method::Pac, level, config, e.to_string()),
    };
    config["converged"] = profile.converged.into();
    config["noise_trace"] = profile.variances.iter().sum::<f64>().into();
    run_pac_cell_with_profile(ctx, model, &profile, level, config, point_index)
}

/// Index of the valid cell with the lowest mean RMSE; the earliest wins ties.
pub fn select_best(cells: &[CellResult]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in cells.iter().enumerate() {
        if !c.valid || !c.rmse_mean.is_finite() {
            continue;
        }
        if best.is_none_or(|b| c.rmse_mean < cells[b].rmse_mean) {
            best = Some(i);
        }
    }
    best
}

/// Every grid cell of one method at one privacy level, plus the winner.
#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub cells: Vec<CellResult>,
    pub best: Option<usize>,
}

/// Grid search for every (method, level) in the spec on already-prepared data.
pub fn grid_search(
    spec: &ExperimentSpec,
    data: &PreparedData,
    levels: &[PrivacyLevel],
) -> Vec<(Method, PrivacyLevel, GridOutcome)> {
    let ctx = TrialContext {
        data,
        trials: spec.trials,
        master_seed: spec.seed,
    };
    let mut out = Vec::new();
    for &method in &spec.methods {
        let per_level: Vec<Vec<CellResult>> = match method {
            Method::NonPrivate => levels
                .iter()
                .map(|l| vec![run_non_private_cell(&ctx, &spec.non_private, l)])
                .collect(),
            Method::Dpsgd => {
                let points = spec.dp_grid.points();
                let base = DpTrainingConfig {
                    learning_rate: 0.0,
                    batch_size: 0,
                    epochs: 0,
                    clip_norm: 0.0,
                    epsilon: 0.0,
                    delta: spec.delta,
                    seed: 0,
                    sampling: spec.dp_grid.sampling,
                    init: spec.dp_grid.init,
                };
                levels
                    .par_iter()
                    .map(|l| {
                        points
                            .par_iter()
                            .enumerate()
                            .map(|(i, p)| run_dpsgd_cell(&ctx, p, &base, l, i))
                            .collect()
                    })
                    .collect()
            }
            Method::Pac => {
                let candidates: Vec<PacCandidate> = spec
                    .pac_grid
                    .points()
                    .into_par_iter()
                    .enumerate()
                    .map(|(i, fit)| PacCandidate::build(&data.train, fit, spec, i))
                    .collect();
                levels
                    .par_iter()
                    .map(|l| {
                        candidates
                            .par_iter()
                            .enumerate()
                            .map(|(i, c)| run_pac_cell(&ctx, c, spec, l, i))
                            .collect()
                    })
                    .collect()
            }
        };
        for (level, cells) in levels.iter().zip(per_level) {
            let best = select_best(&cells);
            out.push((method, *level, GridOutcome { cells, best }));
        }
    }
    out
}

/// Runs the whole experiment described by `spec`.
pub fn run_benchmark(spec: &ExperimentSpec) -> Result<TrialReport, BenchError> {
    spec.validate()?;
    let manifest = spec.manifest()?;
    let data = manifest.load()?;
    let name = spec.name.clone().unwrap_or_else(|| manifest.display_name());
    run_benchmark_on(spec, &name, &data)
}

/// [`run_benchmark`] on a dataset already in memory.
pub fn run_benchmark_on(spec: &ExperimentSpec, name: &str, data: &Dataset) -> Result<TrialReport, BenchError> {
    spec.validate()?;
    let prepared = prepare(data, spec.split.test_fraction, spec.split.seed, spec.normalization)?;
    let levels = spec
        .psr_levels
        .iter()
        .map(|&p| PrivacyLevel::from_psr(p, spec.delta))
        .collect::<Result<Vec<_>, _>>()?;

    let started = std::time::Instant::now();
    let searched = grid_search(spec, &prepared, &levels);

    let mut results = Vec::new();
    let mut grid = Vec::new();
    let mut failures = Vec::new();
    for (method, level, outcome) in searched {
        match outcome.best {
            Some(b) => results.push(outcome.cells[b].clone()),
            None => {
                let reason = outcome
                    .cells
                    .iter()
                    .find_map(|c| c.error.clone())
                    .unwrap_or_else(|| "no valid cells".into());
                failures.push(format!("{method} at psr {}: {reason}", level.psr));
            }
        }
        grid.extend(outcome.cells.iter().map(CellResult::summary));
    }
    if !failures.is_empty() {
        return Err(BenchError::AllGridPointsFailed(failures.join("; ")));
    }

    let reference_level = PrivacyLevel {
        psr: f64::NAN,
        mi: f64::NAN,
        epsilon_equiv: f64::INFINITY,
        delta_equiv: spec.delta,
        prior: 0.5,
    };
    let ctx = TrialContext {
        data: &prepared,
        trials: 1,
        master_seed: spec.seed,
    };
    let mut reference = run_non_private_cell(&ctx, &spec.non_private, &reference_level);
    reference.psr = 1.0;

    Ok(TrialReport {
        dataset: name.to_string(),
        metadata: ReportMetadata {
            master_seed: spec.seed,
            trials: spec.trials,
            delta: spec.delta,
            normalization: spec.normalization,
            split: spec.split,
            n_train: prepared.train.n(),
            n_test: prepared.test.n(),
            n_features: prepared.train.d(),
            methods: spec.methods.clone(),
            psr_levels: spec.psr_levels.clone(),
            pac: spec.pac,
            dp_sampling: spec.dp_grid.sampling,
            dp_init: spec.dp_grid.init,
            elapsed_seconds: started.elapsed().as_secs_f64(),
        },
        results,
        reference: reference.summary(),
        grid,
    })
}
