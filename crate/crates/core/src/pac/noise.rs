use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{NoiseMode, NoiseProfile, PacError};
use crate::regression::Coefficients;

/// One draw of the profile's noise vector.
pub fn sample_noise<R: rand::Rng>(profile: &NoiseProfile, rng: &mut R) -> Result<DVector<f64>, PacError> {
    if let Some((i, v)) = profile
        .variances
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v >= 0.0 && v.is_finite()))
    {
        return Err(PacError::NegativeVariance { index: i, value: *v });
    }
    let p = profile.dim();
    let z = DVector::from_fn(p, |i, _| {
        let u: f64 = StandardNormal.sample(rng);
        u * profile.variances[i].sqrt()
    });
    Ok(match profile.mode {
        NoiseMode::CovarianceCorrect => profile.basis_matrix()?.tr_mul(&z),
        NoiseMode::PaperLiteral => z,
    })
}

/// Adds one draw of the profile's Gaussian noise to `model`. Variances are
/// variances, not standard deviations.
pub fn add_noise(model: &Coefficients, profile: &NoiseProfile, seed: u64) -> Result<Coefficients, PacError> {
    if profile.dim() != model.n_params() {
        return Err(PacError::Dimension(format!(
            "profile has {} dimensions, model has {} parameters",
            profile.dim(),
            model.n_params()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = sample_noise(profile, &mut rng)?;
    Ok(Coefficients::from_vector(&(model.to_vector() + noise)))
}
