use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{calibrate_sigma, epsilon_for, DpError, DpParams};
use crate::dataio::Dataset;
use crate::regression::Coefficients;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Each example joins a batch independently with probability `b/n`.
    #[default]
    Poisson,
    /// Exactly `b` examples drawn without replacement; accounted as if Poisson.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    #[default]
    Zeros,
    /// `U(−1/√d, 1/√d)` for every parameter, the usual dense-layer default.
    Random,
}

/// DP-SGD hyperparameters with an explicit noise multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpSgdConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub clip_norm: f64,
    pub noise_multiplier: f64,
    pub seed: u64,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub init: Init,
}

impl DpSgdConfig {
    pub fn validate(&self, n: usize) -> Result<(), DpError> {
        let bad = |m: String| Err(DpError::InvalidParameter(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 || self.batch_size > n {
            return bad(format!("batch size {} outside 1..={n}", self.batch_size));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.clip_norm > 0.0) {
            return bad(format!("clip norm must be positive, got {}", self.clip_norm));
        }
        if !(self.noise_multiplier >= 0.0 && self.noise_multiplier.is_finite()) {
            return bad(format!("noise multiplier must be non-negative, got {}", self.noise_multiplier));
        }
        Ok(())
    }

    pub fn sample_rate(&self, n: usize) -> f64 {
        self.batch_size as f64 / n as f64
    }

    /// Noisy releases: `epochs · ceil(n / b)`.
    pub fn steps(&self, n: usize) -> u64 {
        (self.epochs * n.div_ceil(self.batch_size)) as u64
    }
}

/// Training request with a target privacy budget instead of a noise multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpTrainingConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub clip_norm: f64,
    pub epsilon: f64,
    pub delta: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub init: Init,
}

impl DpTrainingConfig {
    /// Resolves the noise multiplier for a training set of `n` rows.
    pub fn calibrate(&self, n: usize) -> Result<DpSgdConfig, DpError> {
        let mut cfg = DpSgdConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            clip_norm: self.clip_norm,
            noise_multiplier: 0.0,
            seed: self.seed,
            sampling: self.sampling,
            init: self.init,
        };
        cfg.validate(n)?;
        let target = DpParams::new(self.epsilon, self.delta)?;
        cfg.noise_multiplier = calibrate_sigma(target, cfg.sample_rate(n), cfg.steps(n))?;
        Ok(cfg)
    }
}

/// What one optimizer step saw; handed to a [`TrainingObserver`].
#[derive(Debug)]
pub struct StepRecord<'a> {
    pub step: u64,
    pub epoch: usize,
    pub batch: &'a [usize],
    /// ℓ₂ norms of the per-example gradients after clipping.
    pub clipped_norms: &'a [f64],
    pub params: &'a [f64],
}

pub trait TrainingObserver {
    fn on_step(&mut self, record: &StepRecord<'_>);
}

impl<F: FnMut(&StepRecord<'_>)> TrainingObserver for F {
    fn on_step(&mut self, record: &StepRecord<'_>) {
        self(record)
    }
}

struct NoObserver;

impl TrainingObserver for NoObserver {
    fn on_step(&mut self, _: &StepRecord<'_>) {}
}

/// Draws mini-batches of row indices.
#[derive(Debug)]
pub struct BatchSampler {
    n: usize,
    batch_size: usize,
    sampling: Sampling,
}

impl BatchSampler {
    pub fn new(n: usize, batch_size: usize, sampling: Sampling) -> Self {
        Self {
            n,
            batch_size,
            sampling,
        }
    }

    /// Fills `out` with the next batch (ascending indices for Poisson, draw order for fixed).
    pub fn sample<R: Rng>(&self, rng: &mut R, out: &mut Vec<usize>) {
        out.clear();
        match self.sampling {
            Sampling::Poisson => {
                let q = self.batch_size as f64 / self.n as f64;
                out.extend((0..self.n).filter(|_| rng.random::<f64>() < q));
            }
            Sampling::Fixed => out.extend(index::sample(rng, self.n, self.batch_size).iter()),
        }
    }
}

/// Scales `g` in place to `g · min(1, C/‖g‖₂)` and returns the resulting norm.
pub fn clip_in_place(g: &mut [f64], clip_norm: f64) -> f64 {
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > clip_norm {
        let s = clip_norm / norm;
        g.iter_mut().for_each(|v| *v *= s);
        clip_norm.min(norm * s)
    } else {
        norm
    }
}

pub fn clip_gradient(g: &[f64], clip_norm: f64) -> Vec<f64> {
    let mut out = g.to_vec();
    clip_in_place(&mut out, clip_norm);
    out
}

/// Per-example loss `½(wᵀx + b − y)²`; `params` is `[w..., b]`.
pub fn per_example_loss(params: &[f64], x: &[f64], y: f64) -> f64 {
    let r = residual(params, x, y);
    0.5 * r * r
}

/// Gradient of [`per_example_loss`] with respect to `[w..., b]`: `r·(x, 1)`.
pub fn per_example_gradient(params: &[f64], x: &[f64], y: f64) -> Vec<f64> {
    let r = residual(params, x, y);
    x.iter().map(|xi| r * xi).chain(std::iter::once(r)).collect()
}

fn residual(params: &[f64], x: &[f64], y: f64) -> f64 {
    let d = x.len();
    params[..d].iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + params[d] - y
}

/// Trains a linear model by DP-SGD with the config's noise multiplier.
pub fn dpsgd_train(data: &Dataset, config: &DpSgdConfig) -> Result<Coefficients, DpError> {
    dpsgd_train_observed(data, config, &mut NoObserver)
}

/// [`dpsgd_train`] with a hook invoked after every step.
///
/// Each step samples a batch, clips every per-example gradient to `C`, adds
/// `N(0, σ²C²)` to each coordinate of the clipped sum, divides by the nominal
/// batch size `b` and takes a gradient step.
pub fn dpsgd_train_observed(
    data: &Dataset,
    config: &DpSgdConfig,
    observer: &mut dyn TrainingObserver,
) -> Result<Coefficients, DpError> {
    let (n, d) = (data.n(), data.d());
    config.validate(n)?;
    let p = d + 1;
    // row-major copy for cache-friendly per-example access
    let rows: Vec<f64> = (0..n)
        .flat_map(|i| data.features.row(i).iter().copied().collect::<Vec<_>>())
        .collect();
    let labels = data.labels.as_slice();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = vec![0.0; p];
    if config.init == Init::Random {
        let bound = 1.0 / (d as f64).sqrt();
        params.iter_mut().for_each(|w| *w = rng.random_range(-bound..bound));
    }

    let noise_std = config.noise_multiplier * config.clip_norm;
    let noise = if noise_std > 0.0 {
        Some(Normal::new(0.0, noise_std).map_err(|e| DpError::InvalidParameter(e.to_string()))?)
    } else {
        None
    };
    let sampler = BatchSampler::new(n, config.batch_size, config.sampling);
    let steps_per_epoch = n.div_ceil(config.batch_size);
    let scale = 1.0 / config.batch_size as f64;

    let mut batch = Vec::with_capacity(config.batch_size * 2);
    let mut norms = Vec::with_capacity(config.batch_size * 2);
    let mut sum = vec![0.0; p];
    let mut g = vec![0.0; p];
    let mut step: u64 = 0;

    for epoch in 0..config.epochs {
        for _ in 0..steps_per_epoch {
            step += 1;
            sampler.sample(&mut rng, &mut batch);
            sum.iter_mut().for_each(|v| *v = 0.0);
            norms.clear();
            for &i in &batch {
                let x = &rows[i * d..(i + 1) * d];
                let r = residual(&params, x, labels[i]);
                for (gj, xj) in g.iter_mut().zip(x) {
                    *gj = r * xj;
                }
                g[d] = r;
                norms.push(clip_in_place(&mut g, config.clip_norm));
                sum.iter_mut().zip(&g).for_each(|(s, gi)| *s += gi);
            }
            if let Some(noise) = &noise {
                sum.iter_mut().for_each(|s| *s += noise.sample(&mut rng));
            }
            for (w, s) in params.iter_mut().zip(&sum) {
                *w -= config.learning_rate * s * scale;
            }
            if params.iter().any(|w| !w.is_finite()) {
                return Err(DpError::Diverged { step });
            }
            observer.on_step(&StepRecord {
                step,
                epoch,
                batch: &batch,
                clipped_norms: &norms,
                params: &params,
            });
        }
    }
    Ok(Coefficients::new(params[..d].to_vec(), params[d]))
}

/// Result of budgeted DP-SGD training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpTrainingOutcome {
    pub coefficients: Coefficients,
    pub noise_multiplier: f64,
    pub sample_rate: f64,
    pub steps: u64,
    /// ε actually accounted for the calibrated noise multiplier.
    pub epsilon_spent: f64,
}

/// Calibrates σ for the requested (ε, δ) and trains.
pub fn train_private(data: &Dataset, config: &DpTrainingConfig) -> Result<DpTrainingOutcome, DpError> {
    let cfg = config.calibrate(data.n())?;
    let q = cfg.sample_rate(data.n());
    let steps = cfg.steps(data.n());
    let coefficients = dpsgd_train(data, &cfg)?;
    Ok(DpTrainingOutcome {
        coefficients,
        noise_multiplier: cfg.noise_multiplier,
        sample_rate: q,
        steps,
        epsilon_spent: epsilon_for(cfg.noise_multiplier, q, steps, config.delta)?,
    })
}
