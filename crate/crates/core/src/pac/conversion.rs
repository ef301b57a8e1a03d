use serde::{Deserialize, Serialize};

use super::PacError;

/// Prior probability of membership in the membership-inference game.
pub const MEMBERSHIP_PRIOR: f64 = 0.5;
/// δ used when expressing a success rate as an (ε, δ) pair.
pub const DEFAULT_DELTA: f64 = 1e-5;

fn check_psr(psr: f64) -> Result<(), PacError> {
    if psr > 0.5 && psr < 1.0 {
        Ok(())
    } else {
        Err(PacError::InvalidLevel(format!(
            "posterior success rate must lie in (0.5, 1), got {psr}"
        )))
    }
}

/// Smallest mutual information that lets an adversary reach posterior
/// success rate `psr` from a 0.5 prior: `p·ln(2p) + (1−p)·ln(2−2p)`.
pub fn psr_to_mi(psr: f64) -> Result<f64, PacError> {
    check_psr(psr)?;
    // written around p = ½ + t so that tiny t keeps full precision
    let t = psr - 0.5;
    Ok(psr * (2.0 * t).ln_1p() + (1.0 - psr) * (-2.0 * t).ln_1p())
}

/// ε an (ε, δ)-DP mechanism needs before membership inference can reach `psr`:
/// `ln((1−δ)/(1−p) − 1)`.
pub fn psr_to_epsilon(psr: f64, delta: f64) -> Result<f64, PacError> {
    check_psr(psr)?;
    if !(0.0..1.0).contains(&delta) {
        return Err(PacError::InvalidLevel(format!("delta must lie in [0, 1), got {delta}")));
    }
    let ratio = (1.0 - delta) / (1.0 - psr);
    if !(ratio > 1.0) {
        return Err(PacError::InvalidLevel(format!(
            "ln argument (1−δ)/(1−p) − 1 = {} is not positive",
            ratio - 1.0
        )));
    }
    Ok((ratio - 1.0).ln())
}

/// Inverse of [`psr_to_epsilon`]: `p = 1 − (1−δ)/(1 + e^ε)`.
pub fn epsilon_to_psr(epsilon: f64, delta: f64) -> Result<f64, PacError> {
    if !(epsilon.is_finite() && epsilon > 0.0) || !(0.0..1.0).contains(&delta) {
        return Err(PacError::InvalidLevel(format!(
            "need ε > 0 and δ in [0, 1), got ε = {epsilon}, δ = {delta}"
        )));
    }
    let psr = 1.0 - (1.0 - delta) / (1.0 + epsilon.exp());
    check_psr(psr)?;
    Ok(psr)
}

/// Inverse of [`psr_to_mi`] by bisection. MI is bounded above by ln 2.
pub fn mi_to_psr(mi: f64) -> Result<f64, PacError> {
    if !(mi > 0.0 && mi < std::f64::consts::LN_2) {
        return Err(PacError::InvalidLevel(format!(
            "mutual information must lie in (0, ln 2), got {mi}"
        )));
    }
    let (mut lo, mut hi) = (0.5f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if psr_to_mi(mid)? < mi {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// One privacy setting seen three ways: success rate, MI budget and DP-equivalent ε.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyLevel {
    pub psr: f64,
    pub mi: f64,
    pub epsilon_equiv: f64,
    pub delta_equiv: f64,
    pub prior: f64,
}

impl PrivacyLevel {
    pub fn from_psr(psr: f64, delta: f64) -> Result<Self, PacError> {
        Ok(Self {
            psr,
            mi: psr_to_mi(psr)?,
            epsilon_equiv: psr_to_epsilon(psr, delta)?,
            delta_equiv: delta,
            prior: MEMBERSHIP_PRIOR,
        })
    }

    pub fn from_epsilon(epsilon: f64, delta: f64) -> Result<Self, PacError> {
        let psr = epsilon_to_psr(epsilon, delta)?;
        Ok(Self {
            epsilon_equiv: epsilon,
            ..Self::from_psr(psr, delta)?
        })
    }

    pub fn from_mi(mi: f64, delta: f64) -> Result<Self, PacError> {
        let psr = mi_to_psr(mi)?;
        Ok(Self {
            mi,
            ..Self::from_psr(psr, delta)?
        })
    }
}
