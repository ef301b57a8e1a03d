use serde::{Deserialize, Serialize};

use super::{add_noise, estimate_deviations, NoiseProfile, PacError, PacEstimationConfig, PrivacyLevel};
use crate::dataio::Dataset;
use crate::regression::{Coefficients, FitSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacTrainingOutcome {
    pub coefficients: Coefficients,
    pub non_private: Coefficients,
    pub profile: NoiseProfile,
}

/// Estimates noise for `level`, fits on all of `data` and perturbs the fit.
///
/// `config.mi_budget` is replaced by `level.mi`; `seed` drives only the final noise draw.
pub fn pac_train(
    data: &Dataset,
    fit: &FitSpec,
    level: &PrivacyLevel,
    config: &PacEstimationConfig,
    seed: u64,
) -> Result<PacTrainingOutcome, PacError> {
    fit.validate()?;
    let config = PacEstimationConfig {
        mi_budget: level.mi,
        ..*config
    };
    let profile = estimate_deviations(data, fit, &config)?.profile(level.mi)?;
    let non_private = fit.fit_dataset(data)?.coefficients;
    let coefficients = add_noise(&non_private, &profile, seed)?;
    Ok(PacTrainingOutcome {
        coefficients,
        non_private,
        profile,
    })
}
