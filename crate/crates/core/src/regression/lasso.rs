use nalgebra::{DMatrix, DVector};

use super::solve::{center, intercept_for};
use super::{check_xy, Coefficients, FitOutcome, RegressionError, Result};

/// Cyclic coordinate-descent stopping rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoSettings {
    pub max_sweeps: usize,
    /// Converged when no coordinate moved more than this in a full sweep.
    pub tolerance: f64,
}

impl Default for LassoSettings {
    fn default() -> Self {
        Self {
            max_sweeps: 10_000,
            tolerance: 1e-8,
        }
    }
}

/// Lasso with intercept and default settings.
pub fn fit_lasso(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<FitOutcome> {
    fit_lasso_with(x, y, lambda, true, &LassoSettings::default())
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Minimizes `‖y − Xβ − b‖² + λ‖β‖₁` by cyclic coordinate descent over the
/// centered Gram matrix, starting from zero and visiting coordinates in column
/// order, so the result is a deterministic function of the inputs.
///
/// Coordinate update: `βⱼ ← S(cⱼ − Σₖ≠ⱼ Gⱼₖβₖ, λ/2) / Gⱼⱼ`.
pub fn fit_lasso_with(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    fit_intercept: bool,
    settings: &LassoSettings,
) -> Result<FitOutcome> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(RegressionError::NegativeLambda(lambda));
    }
    check_xy(x, y)?;
    let c = center(x, y, fit_intercept);
    let d = x.ncols();
    let gram = c.x.tr_mul(&c.x);
    let corr = c.x.tr_mul(&c.y);
    let half = 0.5 * lambda;

    let mut w = DVector::<f64>::zeros(d);
    // g = G·w, kept in sync incrementally.
    let mut gw = DVector::<f64>::zeros(d);
    let mut last_change = f64::INFINITY;

    for sweep in 1..=settings.max_sweeps {
        let mut max_change = 0.0f64;
        for j in 0..d {
            let gjj = gram[(j, j)];
            let old = w[j];
            let new = if gjj > 0.0 {
                let partial = corr[j] - (gw[j] - gjj * old);
                soft_threshold(partial, half) / gjj
            } else {
                0.0
            };
            let delta = new - old;
            if delta != 0.0 {
                w[j] = new;
                gw.axpy(delta, &gram.column(j), 1.0);
                max_change = max_change.max(delta.abs());
            }
        }
        last_change = max_change;
        if !max_change.is_finite() {
            return Err(RegressionError::NonFinite);
        }
        if max_change < settings.tolerance {
            let intercept = intercept_for(&c, &w);
            return Ok(FitOutcome {
                coefficients: Coefficients::new(w.iter().copied().collect(), intercept),
                rank_deficient: false,
                sweeps: sweep,
            });
        }
    }
    let intercept = intercept_for(&c, &w);
    Err(RegressionError::NotConverged {
        sweeps: settings.max_sweeps,
        last_change,
        last_iterate: Coefficients::new(w.iter().copied().collect(), intercept),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::{fit_ols, predict};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(n: usize, d: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
        let beta = DVector::from_fn(d, |_, _| rng.random_range(-3.0..3.0));
        let noise = DVector::from_fn(n, |_, _| rng.random_range(-0.5..0.5));
        let y = &x * beta + noise;
        (x, y.add_scalar(1.5))
    }

    /// Subgradient optimality of `‖r‖² + λ‖β‖₁` for every coordinate.
    fn max_kkt_violation(x: &DMatrix<f64>, y: &DVector<f64>, c: &Coefficients, lambda: f64) -> f64 {
        let r = y - predict(c, x).unwrap();
        let grad = x.tr_mul(&r) * -2.0;
        c.weights
            .iter()
            .zip(grad.iter())
            .map(|(&w, &g)| {
                if w != 0.0 {
                    (g + lambda * w.signum()).abs()
                } else {
                    (g.abs() - lambda).max(0.0)
                }
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn single_feature_soft_threshold() {
        // S(xᵀy, λ/2) / xᵀx = (2 − 0.5) / 2
        let x = DMatrix::from_column_slice(2, 1, &[1.0, -1.0]);
        let y = DVector::from_column_slice(&[1.0, -1.0]);
        let fit = fit_lasso(&x, &y, 1.0).unwrap();
        assert!((fit.coefficients.weights[0] - 0.75).abs() < 1e-8);
        assert!(fit.coefficients.intercept.abs() < 1e-12);
    }

    #[test]
    fn kill_condition_zeroes_everything() {
        let (x, y) = random_problem(30, 4, 2);
        let c = center(&x, &y, true);
        let lambda = 2.0 * c.x.tr_mul(&c.y).amax();
        let fit = fit_lasso(&x, &y, lambda).unwrap();
        assert!(fit.coefficients.weights.iter().all(|&w| w == 0.0));
        assert!((fit.coefficients.intercept - y.mean()).abs() < 1e-12);
    }

    #[test]
    fn zero_penalty_matches_ols() {
        let (x, y) = random_problem(60, 4, 8);
        let lasso = fit_lasso(&x, &y, 0.0).unwrap().coefficients.to_vector();
        let ols = fit_ols(&x, &y).unwrap().coefficients.to_vector();
        assert!((lasso - ols).amax() < 1e-6);
    }

    #[test]
    fn stationarity_on_random_instances() {
        for seed in 0..20 {
            let (x, y) = random_problem(40, 6, seed);
            for lambda in [0.1, 1.0, 5.0, 20.0] {
                let fit = fit_lasso(&x, &y, lambda).unwrap();
                assert!(max_kkt_violation(&x, &y, &fit.coefficients, lambda) < 1e-6);
            }
        }
    }

    #[test]
    fn non_convergence_carries_iterate() {
        let (x, y) = random_problem(20, 3, 4);
        let settings = LassoSettings {
            max_sweeps: 1,
            tolerance: 0.0,
        };
        match fit_lasso_with(&x, &y, 0.1, true, &settings) {
            Err(RegressionError::NotConverged { sweeps, last_iterate, .. }) => {
                assert_eq!(sweeps, 1);
                assert_eq!(last_iterate.dimension(), 3);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn negative_lambda() {
        let (x, y) = random_problem(5, 1, 0);
        assert!(fit_lasso(&x, &y, -1.0).is_err());
    }

    proptest! {
        // With orthogonal centered columns each coordinate is an independent
        // soft-threshold, so the zero set can only grow with λ.
        #[test]
        fn zero_set_grows_with_lambda(seed in 0u64..500, scale in 0.1f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let raw = DMatrix::from_fn(16, 4, |_, _| rng.random_range(-1.0..1.0));
            let c = center(&raw, &DVector::zeros(16), true);
            let q = c.x.qr().q();
            let y = DVector::from_fn(16, |_, _| rng.random_range(-scale..scale));
            let mut prev_zeros = 0usize;
            for k in -6..=8 {
                let fit = fit_lasso(&q, &y, 2f64.powi(k)).unwrap();
                let zeros: Vec<bool> = fit.coefficients.weights.iter().map(|w| *w == 0.0).collect();
                let count = zeros.iter().filter(|z| **z).count();
                prop_assert!(count >= prev_zeros);
                prev_zeros = count;
            }
        }
    }
}
