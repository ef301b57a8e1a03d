//! DP-SGD for linear regression and the Rényi-DP accountant that turns an
//! (ε, δ) target into a noise multiplier.

mod accountant;
mod sgd;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use accountant::{
    calibrate_sigma, default_orders, epsilon_for, rdp_subsampled_gaussian, rdp_to_dp,
    rdp_to_dp_with_order, RdpCurve, SIGMA_MAX, SIGMA_MIN,
};
pub use sgd::{
    clip_gradient, clip_in_place, dpsgd_train, dpsgd_train_observed, per_example_gradient,
    per_example_loss, train_private, BatchSampler, DpSgdConfig, DpTrainingConfig,
    DpTrainingOutcome, Init, Sampling, StepRecord, TrainingObserver,
};

#[derive(Debug, Error)]
pub enum DpError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("Rényi order must exceed 1, got {0}")]
    InvalidOrder(f64),
    #[error("RDP curve has no orders")]
    EmptyCurve,
    #[error("(ε = {epsilon}, δ = {delta}) is not reachable with noise multiplier ≤ {sigma_max}")]
    Unreachable {
        epsilon: f64,
        delta: f64,
        sigma_max: f64,
    },
    #[error("training produced non-finite parameters at step {step}")]
    Diverged { step: u64 },
}

/// An (ε, δ) differential-privacy budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpParams {
    pub epsilon: f64,
    pub delta: f64,
}

impl DpParams {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self, DpError> {
        let p = Self { epsilon, delta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), DpError> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(DpError::InvalidParameter(format!(
                "epsilon must be positive and finite, got {}",
                self.epsilon
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(DpError::InvalidParameter(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        Ok(())
    }
}
