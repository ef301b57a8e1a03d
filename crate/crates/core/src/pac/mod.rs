//! Output perturbation calibrated by PAC privacy: success-rate and budget
//! conversions, a learned projection basis, anisotropic noise estimation by
//! resampling and the noise draw itself.

mod conversion;
mod estimate;
mod noise;
mod projection;
mod train;

use thiserror::Error;

pub use conversion::{
    epsilon_to_psr, mi_to_psr, psr_to_epsilon, psr_to_mi, PrivacyLevel, DEFAULT_DELTA,
    MEMBERSHIP_PRIOR,
};
pub use estimate::{
    estimate_deviations, estimate_noise, instance_variances, learn_projection, DeviationEstimate,
    FnMechanism, InstanceDeviation, Mechanism, NoiseMode, NoiseProfile, PacEstimationConfig,
    ProjectionChoice,
};
pub use noise::{add_noise, sample_noise};
pub use projection::{compute_projection, ProjectionBasis};
pub use train::{pac_train, PacTrainingOutcome};

use crate::regression::RegressionError;

#[derive(Debug, Error)]
pub enum PacError {
    #[error("invalid privacy level: {0}")]
    InvalidLevel(String),
    #[error("invalid estimation config: {0}")]
    InvalidConfig(String),
    #[error("projection: {0}")]
    Projection(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("noise variance at index {index} is {value}; variances must be finite and non-negative")]
    NegativeVariance { index: usize, value: f64 },
    #[error("mechanism failed: {0}")]
    Mechanism(String),
    #[error(transparent)]
    Fit(#[from] RegressionError),
}
