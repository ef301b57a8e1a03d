use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{compute_projection, PacError, ProjectionBasis};
use crate::dataio::Dataset;
use crate::regression::FitSpec;

/// A deterministic training procedure whose output gets privatized.
pub trait Mechanism: Sync {
    fn run(&self, data: &Dataset) -> Result<DVector<f64>, PacError>;
}

impl Mechanism for FitSpec {
    fn run(&self, data: &Dataset) -> Result<DVector<f64>, PacError> {
        Ok(self.fit_dataset(data)?.coefficients.to_vector())
    }
}

/// Wraps a closure as a [`Mechanism`].
pub struct FnMechanism<F>(pub F);

impl<F> Mechanism for FnMechanism<F>
where
    F: Fn(&Dataset) -> Result<DVector<f64>, PacError> + Sync,
{
    fn run(&self, data: &Dataset) -> Result<DVector<f64>, PacError> {
        (self.0)(data)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Compare `M(A)` against `M(A ∪ {x})`; noise is drawn in the projected
    /// basis and rotated back, so its covariance is `V·diag(e)·Vᵀ`.
    #[default]
    CovarianceCorrect,
    /// Compare `M(A)` against `M(D)`; per-coordinate variances are read off
    /// the diagonal of `Vᵀ·diag(e)` and noise is added independently.
    PaperLiteral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ProjectionChoice {
    Identity,
    /// SVD of `samples` mechanism outputs on independent half-rate resamples.
    Svd { samples: usize },
}

impl Default for ProjectionChoice {
    fn default() -> Self {
        ProjectionChoice::Svd { samples: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacEstimationConfig {
    pub sampling_rate: f64,
    /// Largest per-dimension change of the running mean that counts as settled.
    pub convergence_threshold: f64,
    pub min_rounds: usize,
    pub max_rounds: usize,
    pub projection: ProjectionChoice,
    pub mi_budget: f64,
    pub mode: NoiseMode,
    /// Estimate from at most this many left-out points (chosen at random) instead of all.
    pub max_instances: Option<usize>,
    pub seed: u64,
}

impl Default for PacEstimationConfig {
    fn default() -> Self {
        Self {
            sampling_rate: 0.5,
            convergence_threshold: 1e-4,
            min_rounds: 30,
            max_rounds: 1000,
            projection: ProjectionChoice::default(),
            mi_budget: 0.130812,
            mode: NoiseMode::default(),
            max_instances: None,
            seed: 0,
        }
    }
}

impl PacEstimationConfig {
    pub fn validate(&self) -> Result<(), PacError> {
        let bad = |m: String| Err(PacError::InvalidConfig(m));
        if !(self.sampling_rate > 0.0 && self.sampling_rate < 1.0) {
            return bad(format!("sampling rate must lie in (0, 1), got {}", self.sampling_rate));
        }
        if !(self.convergence_threshold > 0.0) {
            return bad(format!(
                "convergence threshold must be positive, got {}",
                self.convergence_threshold
            ));
        }
        if self.min_rounds < 2 || self.max_rounds < self.min_rounds {
            return bad(format!(
                "need 2 ≤ min_rounds ≤ max_rounds, got {} and {}",
                self.min_rounds, self.max_rounds
            ));
        }
        check_mi(self.mi_budget)?;
        if let ProjectionChoice::Svd { samples } = self.projection {
            if samples < 2 {
                return bad(format!("SVD projection needs at least 2 samples, got {samples}"));
            }
        }
        if self.max_instances == Some(0) {
            return bad("max_instances must be at least 1".into());
        }
        Ok(())
    }
}

fn check_mi(mi: f64) -> Result<(), PacError> {
    if mi > 0.0 && mi.is_finite() {
        Ok(())
    } else {
        Err(PacError::InvalidLevel(format!("MI budget must be positive and finite, got {mi}")))
    }
}

/// Per left-out point: mean squared output deviation in each projected dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDeviation {
    pub index: usize,
    pub mean_sq_dev: Vec<f64>,
    pub rounds: usize,
    pub converged: bool,
}

/// Output sensitivity measured by repeated resampling. Independent of the MI
/// budget, so one estimate yields a noise profile for any privacy level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationEstimate {
    pub basis: ProjectionBasis,
    pub mode: NoiseMode,
    pub instances: Vec<InstanceDeviation>,
}

/// Per-dimension variances `e[i] = √v̄[i] · Σⱼ√v̄[j] / (4·MI)`.
pub fn instance_variances(mean_sq_dev: &[f64], mi: f64) -> Vec<f64> {
    let total: f64 = mean_sq_dev.iter().map(|v| v.sqrt()).sum();
    mean_sq_dev
        .iter()
        .map(|v| v.sqrt() * total / (4.0 * mi))
        .collect()
}

impl DeviationEstimate {
    pub fn converged(&self) -> bool {
        self.instances.iter().all(|i| i.converged)
    }

    /// Variances for one instance in the coordinates noise is drawn in.
    pub fn variances_for(&self, instance: &InstanceDeviation, mi: f64) -> Vec<f64> {
        let e = instance_variances(&instance.mean_sq_dev, mi);
        match self.mode {
            NoiseMode::CovarianceCorrect => e,
            // diagonal of Vᵀ·diag(e)
            NoiseMode::PaperLiteral => (0..e.len()).map(|i| self.basis.v_t[(i, i)] * e[i]).collect(),
        }
    }

    /// Element-wise maximum over instances, starting from zero.
    pub fn profile(&self, mi: f64) -> Result<NoiseProfile, PacError> {
        check_mi(mi)?;
        let p = self.basis.dim();
        let mut e_max = vec![0.0f64; p];
        for inst in &self.instances {
            for (m, e) in e_max.iter_mut().zip(self.variances_for(inst, mi)) {
                *m = m.max(e);
            }
        }
        let mut per_dim = vec![0.0f64; p];
        for inst in &self.instances {
            for (m, v) in per_dim.iter_mut().zip(&inst.mean_sq_dev) {
                *m = m.max(*v);
            }
        }
        Ok(NoiseProfile {
            variances: e_max,
            v_t: self.basis.v_t.row_iter().map(|r| r.iter().copied().collect()).collect(),
            mi_budget: mi,
            mode: self.mode,
            converged: self.converged(),
            rounds_per_instance: self.instances.iter().map(|i| i.rounds).collect(),
            per_dim_mean_sq_dev: per_dim,
        })
    }
}

/// Noise to add to a mechanism output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    /// Variances, in the projected basis for covariance-correct mode and in
    /// output coordinates for paper-literal mode.
    pub variances: Vec<f64>,
    pub v_t: Vec<Vec<f64>>,
    pub mi_budget: f64,
    pub mode: NoiseMode,
    pub converged: bool,
    pub rounds_per_instance: Vec<usize>,
    /// Largest mean squared deviation seen in each projected dimension.
    pub per_dim_mean_sq_dev: Vec<f64>,
}

impl NoiseProfile {
    pub fn dim(&self) -> usize {
        self.variances.len()
    }

    pub fn basis_matrix(&self) -> Result<DMatrix<f64>, PacError> {
        let p = self.dim();
        if self.v_t.len() != p || self.v_t.iter().any(|r| r.len() != p) {
            return Err(PacError::Dimension(format!("basis is not {p}×{p}")));
        }
        Ok(DMatrix::from_fn(p, p, |i, j| self.v_t[i][j]))
    }

    /// Covariance of the added noise in output coordinates.
    pub fn covariance(&self) -> Result<DMatrix<f64>, PacError> {
        let diag = DMatrix::from_diagonal(&DVector::from_column_slice(&self.variances));
        Ok(match self.mode {
            NoiseMode::CovarianceCorrect => {
                let v_t = self.basis_matrix()?;
                v_t.tr_mul(&diag) * v_t
            }
            NoiseMode::PaperLiteral => diag,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PacError> {
        serde_json::from_str(text).map_err(|e| PacError::InvalidConfig(format!("noise profile: {e}")))
    }
}

fn poisson_subset<R: Rng>(rng: &mut R, pool: &[usize], q: f64, out: &mut Vec<usize>) {
    loop {
        out.clear();
        out.extend(pool.iter().copied().filter(|_| rng.random::<f64>() < q));
        if !out.is_empty() {
            return;
        }
    }
}

fn instance_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn check_output(out: &DVector<f64>, p: usize) -> Result<(), PacError> {
    if out.len() != p {
        return Err(PacError::Dimension(format!(
            "mechanism returned {} values, expected {p}",
            out.len()
        )));
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(PacError::Mechanism("mechanism returned non-finite output".into()));
    }
    Ok(())
}

/// Learns the projection basis from mechanism outputs on resamples of `data`.
pub fn learn_projection<M: Mechanism + ?Sized>(
    data: &Dataset,
    mechanism: &M,
    samples: usize,
    seed: u64,
) -> Result<ProjectionBasis, PacError> {
    let p = data.d() + 1;
    let pool: Vec<usize> = (0..data.n()).collect();
    let mut rng = instance_rng(seed, 0);
    let mut rows = DMatrix::<f64>::zeros(samples, p);
    let mut subset = Vec::new();
    for k in 0..samples {
        poisson_subset(&mut rng, &pool, 0.5, &mut subset);
        let out = mechanism.run(&data.select_rows(&subset))?;
        check_output(&out, p)?;
        rows.set_row(k, &out.transpose());
    }
    compute_projection(&rows)
}

/// Measures output sensitivity to each left-out point (everything except the MI scaling).
pub fn estimate_deviations<M: Mechanism + ?Sized>(
    data: &Dataset,
    mechanism: &M,
    config: &PacEstimationConfig,
) -> Result<DeviationEstimate, PacError> {
    config.validate()?;
    let n = data.n();
    if n < 2 {
        return Err(PacError::InvalidConfig(format!("need at least 2 rows, got {n}")));
    }
    let p = data.d() + 1;
    let basis = match config.projection {
        ProjectionChoice::Identity => ProjectionBasis::identity(p),
        ProjectionChoice::Svd { samples } => learn_projection(data, mechanism, samples, config.seed)?,
    };

    let mut targets: Vec<usize> = (0..n).collect();
    if let Some(m) = config.max_instances.filter(|&m| m < n) {
        let mut rng = instance_rng(config.seed, u64::MAX);
        targets = rand::seq::index::sample(&mut rng, n, m).into_vec();
        targets.sort_unstable();
    }

    let full_output = match config.mode {
        NoiseMode::PaperLiteral => {
            let out = mechanism.run(data)?;
            check_output(&out, p)?;
            Some(basis.project(&out))
        }
        NoiseMode::CovarianceCorrect => None,
    };

    let instances = targets
        .par_iter()
        .map(|&i| estimate_instance(data, mechanism, config, &basis, full_output.as_ref(), i))
        .collect::<Result<Vec<_>, _>>()?;
    let unsettled = instances.iter().filter(|i| !i.converged).count();
    if unsettled > 0 {
        log::warn!(
            "{unsettled} of {} left-out points hit {} rounds without settling",
            instances.len(),
            config.max_rounds
        );
    }
    Ok(DeviationEstimate {
        basis,
        mode: config.mode,
        instances,
    })
}

fn estimate_instance<M: Mechanism + ?Sized>(
    data: &Dataset,
    mechanism: &M,
    config: &PacEstimationConfig,
    basis: &ProjectionBasis,
    full_output: Option<&DVector<f64>>,
    left_out: usize,
) -> Result<InstanceDeviation, PacError> {
    let p = basis.dim();
    let pool: Vec<usize> = (0..data.n()).filter(|&j| j != left_out).collect();
    let mut rng = instance_rng(config.seed, left_out as u64 + 1);
    let mut a = Vec::with_capacity(pool.len());
    let mut b = Vec::with_capacity(pool.len() + 1);
    let mut mean = vec![0.0f64; p];
    let mut rounds = 0usize;
    let mut converged = false;

    while rounds < config.max_rounds {
        poisson_subset(&mut rng, &pool, config.sampling_rate, &mut a);
        let out_a = mechanism.run(&data.select_rows(&a))?;
        check_output(&out_a, p)?;
        let proj_a = basis.project(&out_a);
        let proj_b = match full_output {
            Some(full) => full.clone(),
            None => {
                b.clear();
                b.extend_from_slice(&a);
                let pos = b.partition_point(|&j| j < left_out);
                b.insert(pos, left_out);
                let out_b = mechanism.run(&data.select_rows(&b))?;
                check_output(&out_b, p)?;
                basis.project(&out_b)
            }
        };
        rounds += 1;
        let r = rounds as f64;
        let mut max_move = 0.0f64;
        for k in 0..p {
            let g = (proj_a[k] - proj_b[k]).powi(2);
            let updated = mean[k] + (g - mean[k]) / r;
            max_move = max_move.max((updated - mean[k]).abs());
            mean[k] = updated;
        }
        if rounds >= config.min_rounds && max_move < config.convergence_threshold {
            converged = true;
            break;
        }
    }
    Ok(InstanceDeviation {
        index: left_out,
        mean_sq_dev: mean,
        rounds,
        converged,
    })
}

/// Full noise estimation: sensitivity measurement followed by MI scaling.
pub fn estimate_noise<M: Mechanism + ?Sized>(
    data: &Dataset,
    mechanism: &M,
    config: &PacEstimationConfig,
) -> Result<NoiseProfile, PacError> {
    estimate_deviations(data, mechanism, config)?.profile(config.mi_budget)
}
