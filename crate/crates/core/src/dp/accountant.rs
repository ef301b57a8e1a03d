//! Rényi-DP accounting for the Poisson-subsampled Gaussian mechanism.
//!
//! Per-step RDP at order α is `ln(A_α)/(α−1)` with
//! `A_α = E_{z∼N(0,σ²)}[((1−q) + q·e^{(2z−1)/(2σ²)})^α]`. Integer orders use the
//! binomial expansion; fractional orders use the two-sided erfc series. Both
//! are summed in log space.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use super::{DpError, DpParams};

/// Largest noise multiplier the calibrator will consider.
pub const SIGMA_MAX: f64 = 1e6;
/// Smallest noise multiplier the calibrator will consider.
pub const SIGMA_MIN: f64 = 1e-2;

/// Orders 1.25, 1.5, 1.75, 2, 2.5, 3..=64, 128, 256.
pub fn default_orders() -> Vec<f64> {
    let mut orders = vec![1.25, 1.5, 1.75, 2.0, 2.5];
    orders.extend((3..=64).map(f64::from));
    orders.extend([128.0, 256.0]);
    orders
}

/// Per-step RDP guarantee at each order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdpCurve {
    pub orders: Vec<f64>,
    pub rdp_values: Vec<f64>,
}

/// Per-step RDP of the subsampled Gaussian with noise multiplier `sigma` and
/// sampling rate `q`. At `q = 1` this is exactly `α/(2σ²)`.
pub fn rdp_subsampled_gaussian(sigma: f64, q: f64, orders: &[f64]) -> Result<RdpCurve, DpError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(DpError::InvalidParameter(format!(
            "noise multiplier must be positive, got {sigma}"
        )));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(DpError::InvalidParameter(format!(
            "sampling rate must lie in (0, 1], got {q}"
        )));
    }
    let rdp_values = orders
        .iter()
        .map(|&alpha| {
            if !(alpha > 1.0) {
                return Err(DpError::InvalidOrder(alpha));
            }
            Ok(rdp_order(sigma, q, alpha))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RdpCurve {
        orders: orders.to_vec(),
        rdp_values,
    })
}

fn rdp_order(sigma: f64, q: f64, alpha: f64) -> f64 {
    if q == 1.0 {
        return alpha / (2.0 * sigma * sigma);
    }
    let log_a = if alpha.fract() == 0.0 {
        log_a_integer(q, sigma, alpha as u64)
    } else {
        log_a_fractional(q, sigma, alpha)
    };
    (log_a / (alpha - 1.0)).max(0.0)
}

fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(eᵃ − eᵇ)`; rounding that would make the difference non-positive yields −∞.
fn log_sub(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    if b >= a {
        return f64::NEG_INFINITY;
    }
    a + (-(b - a).exp()).ln_1p()
}

fn log_erfc(x: f64) -> f64 {
    if x < 20.0 {
        erfc(x).ln()
    } else {
        // asymptotic expansion; erfc underflows near x ≈ 27
        let x2 = x * x;
        let series = 1.0 - 1.0 / (2.0 * x2) + 3.0 / (4.0 * x2 * x2) - 15.0 / (8.0 * x2 * x2 * x2);
        -x2 - x.ln() - 0.5 * std::f64::consts::PI.ln() + series.ln()
    }
}

fn log_binom(n: f64, k: f64) -> f64 {
    ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
}

fn log_a_integer(q: f64, sigma: f64, alpha: u64) -> f64 {
    let a = alpha as f64;
    let (lq, l1q) = (q.ln(), (-q).ln_1p());
    let two_s2 = 2.0 * sigma * sigma;
    (0..=alpha).fold(f64::NEG_INFINITY, |acc, k| {
        let k = k as f64;
        let term = log_binom(a, k) + k * lq + (a - k) * l1q + (k * k - k) / two_s2;
        log_add(acc, term)
    })
}

fn log_a_fractional(q: f64, sigma: f64, alpha: f64) -> f64 {
    let (lq, l1q) = (q.ln(), (-q).ln_1p());
    let s2 = sigma * sigma;
    let z0 = s2 * (1.0 / q - 1.0).ln() + 0.5;
    let sqrt2s = std::f64::consts::SQRT_2 * sigma;

    let mut log_a0 = f64::NEG_INFINITY;
    let mut log_a1 = f64::NEG_INFINITY;
    // generalized binomial coefficient C(α, i), tracked as (ln|c|, sign)
    let mut log_coef = 0.0f64;
    let mut positive = true;
    let mut i = 0u64;
    loop {
        let fi = i as f64;
        let j = alpha - fi;
        let log_t0 = log_coef + fi * lq + j * l1q;
        let log_t1 = log_coef + j * lq + fi * l1q;
        let log_e0 = 0.5f64.ln() + log_erfc((fi - z0) / sqrt2s);
        let log_e1 = 0.5f64.ln() + log_erfc((z0 - j) / sqrt2s);
        let log_s0 = log_t0 + (fi * fi - fi) / (2.0 * s2) + log_e0;
        let log_s1 = log_t1 + (j * j - j) / (2.0 * s2) + log_e1;
        if positive {
            log_a0 = log_add(log_a0, log_s0);
            log_a1 = log_add(log_a1, log_s1);
        } else {
            log_a0 = log_sub(log_a0, log_s0);
            log_a1 = log_sub(log_a1, log_s1);
        }
        // advance C(α, i) → C(α, i+1) = C(α, i)·(α − i)/(i + 1)
        let factor = (alpha - fi) / (fi + 1.0);
        if factor < 0.0 {
            positive = !positive;
        }
        log_coef += factor.abs().ln();
        i += 1;
        if log_s0.max(log_s1) < -30.0 || i > 100_000 {
            break;
        }
    }
    log_add(log_a0, log_a1)
}

/// Converts a per-step RDP curve composed over `steps` to an ε at `delta`:
/// `min_α steps·rdp(α) + ln(1/δ)/(α−1)`.
pub fn rdp_to_dp(curve: &RdpCurve, steps: u64, delta: f64) -> Result<f64, DpError> {
    rdp_to_dp_with_order(curve, steps, delta).map(|(eps, _)| eps)
}

/// Like [`rdp_to_dp`], also returning the minimizing order.
pub fn rdp_to_dp_with_order(curve: &RdpCurve, steps: u64, delta: f64) -> Result<(f64, f64), DpError> {
    if curve.orders.is_empty() || curve.orders.len() != curve.rdp_values.len() {
        return Err(DpError::EmptyCurve);
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(DpError::InvalidParameter(format!("delta must lie in (0, 1), got {delta}")));
    }
    let log_inv_delta = -delta.ln();
    let steps = steps as f64;
    Ok(curve
        .orders
        .iter()
        .zip(&curve.rdp_values)
        .map(|(&a, &r)| (steps * r + log_inv_delta / (a - 1.0), a))
        .fold((f64::INFINITY, f64::NAN), |best, cur| if cur.0 < best.0 { cur } else { best }))
}

/// ε spent by `steps` compositions of the subsampled Gaussian over the default orders.
pub fn epsilon_for(sigma: f64, q: f64, steps: u64, delta: f64) -> Result<f64, DpError> {
    let curve = rdp_subsampled_gaussian(sigma, q, &default_orders())?;
    rdp_to_dp(&curve, steps, delta)
}

/// Smallest noise multiplier in `[SIGMA_MIN, SIGMA_MAX]` whose accounted ε does
/// not exceed the target, found by bisection on `ln σ`.
///
/// Returns [`SIGMA_MIN`] when even that much noise is below budget.
pub fn calibrate_sigma(target: DpParams, q: f64, steps: u64) -> Result<f64, DpError> {
    target.validate()?;
    if steps == 0 {
        return Err(DpError::InvalidParameter("steps must be at least 1".into()));
    }
    let eps = |sigma: f64| epsilon_for(sigma, q, steps, target.delta);

    if eps(SIGMA_MAX)? > target.epsilon {
        return Err(DpError::Unreachable {
            epsilon: target.epsilon,
            delta: target.delta,
            sigma_max: SIGMA_MAX,
        });
    }
    if eps(SIGMA_MIN)? <= target.epsilon {
        return Ok(SIGMA_MIN);
    }
    let (mut lo, mut hi) = (SIGMA_MIN.ln(), SIGMA_MAX.ln());
    while hi - lo > 1e-5 {
        let mid = 0.5 * (lo + hi);
        if eps(mid.exp())? <= target.epsilon {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi.exp())
}
