use nalgebra::{Cholesky, DMatrix, DVector};

use super::{check_xy, Coefficients, FitOutcome, RegressionError, Result};

/// Singular values below this fraction of the largest are treated as zero.
const PINV_RCOND: f64 = 1e-10;
/// Cholesky pivots spread wider than this (≈ condition number 1e12) route to the SVD path.
const CHOLESKY_PIVOT_RATIO: f64 = 1e6;

pub(crate) struct Centered {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub x_mean: DVector<f64>,
    pub y_mean: f64,
}

/// Column-centers `x` and `y`. Solving on centered data and recovering
/// `b = ȳ − x̄ᵀβ` is the intercept-augmented system with an unpenalized intercept.
pub(crate) fn center(x: &DMatrix<f64>, y: &DVector<f64>, fit_intercept: bool) -> Centered {
    if !fit_intercept {
        return Centered {
            x: x.clone(),
            y: y.clone(),
            x_mean: DVector::zeros(x.ncols()),
            y_mean: 0.0,
        };
    }
    let n = x.nrows() as f64;
    let x_mean = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n));
    let y_mean = y.sum() / n;
    let mut xc = x.clone();
    for (j, mut col) in xc.column_iter_mut().enumerate() {
        col.add_scalar_mut(-x_mean[j]);
    }
    let yc = y.add_scalar(-y_mean);
    Centered {
        x: xc,
        y: yc,
        x_mean,
        y_mean,
    }
}

pub(crate) fn intercept_for(c: &Centered, w: &DVector<f64>) -> f64 {
    c.y_mean - c.x_mean.dot(w)
}

/// Ordinary least squares via the normal equations, with an SVD pseudoinverse
/// fallback (flagged) when the design is rank deficient.
pub fn fit_ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<FitOutcome> {
    fit_penalized_l2(x, y, 0.0, true)
}

/// Ridge regression `(XᵀX + λI)⁻¹Xᵀy` on the centered system; the intercept is
/// not penalized. `lambda = 0` takes exactly the OLS path.
pub fn fit_ridge(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<FitOutcome> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(RegressionError::NegativeLambda(lambda));
    }
    fit_penalized_l2(x, y, lambda, true)
}

pub(crate) fn fit_penalized_l2(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    fit_intercept: bool,
) -> Result<FitOutcome> {
    check_xy(x, y)?;
    let c = center(x, y, fit_intercept);
    let d = x.ncols();

    let mut gram = c.x.tr_mul(&c.x);
    for j in 0..d {
        gram[(j, j)] += lambda;
    }
    let rhs = c.x.tr_mul(&c.y);

    let (w, rank_deficient) = match solve_spd(gram, &rhs) {
        Some(w) => (w, false),
        None => (pinv_solve(&c.x, &c.y, lambda), true),
    };
    if w.iter().any(|v| !v.is_finite()) {
        return Err(RegressionError::NonFinite);
    }
    let intercept = intercept_for(&c, &w);
    Ok(FitOutcome {
        coefficients: Coefficients::new(w.iter().copied().collect(), intercept),
        rank_deficient,
        sweeps: 0,
    })
}

/// Cholesky solve; `None` when the matrix is not numerically positive definite.
fn solve_spd(gram: DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if gram.nrows() == 0 {
        return Some(DVector::zeros(0));
    }
    let chol = Cholesky::new(gram)?;
    let l = chol.l_dirty();
    let diag = l.diagonal();
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v.abs()), hi.max(v.abs())));
    if !(lo > 0.0) || hi / lo > CHOLESKY_PIVOT_RATIO {
        return None;
    }
    Some(chol.solve(rhs))
}

/// Minimum-norm solution of the (optionally ridge-augmented) least-squares problem.
fn pinv_solve(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let d = x.ncols();
    if d == 0 {
        return DVector::zeros(0);
    }
    let svd = x.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let s_max = svd.singular_values.max();
    let cutoff = PINV_RCOND * s_max;
    let uty = u.tr_mul(y);
    let mut coef = DVector::zeros(svd.singular_values.len());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff {
            coef[k] = s * uty[k] / (s * s + lambda);
        }
    }
    v_t.tr_mul(&coef)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::{predict, FitSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(n: usize, d: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(-2.0..2.0));
        let y = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
        (x, y)
    }

    fn augmented(x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut a = x.clone().insert_column(x.ncols(), 1.0);
        a.column_mut(x.ncols()).fill(1.0);
        a
    }

    #[test]
    fn exact_line() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let y = DVector::from_column_slice(&[3.0, 5.0, 7.0]);
        let fit = fit_ols(&x, &y).unwrap();
        assert!((fit.coefficients.weights[0] - 2.0).abs() < 1e-12);
        assert!((fit.coefficients.intercept - 1.0).abs() < 1e-12);
        let res = predict(&fit.coefficients, &x).unwrap() - &y;
        assert!(res.norm() < 1e-12);
        assert!(!fit.rank_deficient);
    }

    #[test]
    fn zero_target() {
        let (x, _) = random_problem(10, 3, 1);
        let fit = fit_ols(&x, &DVector::zeros(10)).unwrap();
        assert!(fit.coefficients.weights.iter().all(|w| w.abs() < 1e-14));
        assert!(fit.coefficients.intercept.abs() < 1e-14);
    }

    #[test]
    fn normal_equations_and_orthogonality() {
        for seed in 0..10 {
            let (x, y) = random_problem(30, 5, seed);
            let fit = fit_ols(&x, &y).unwrap();
            let a = augmented(&x);
            let beta = fit.coefficients.to_vector();
            let lhs = a.tr_mul(&a) * &beta;
            let rhs = a.tr_mul(&y);
            assert!((lhs - &rhs).norm() <= 1e-8 * rhs.norm());
            let resid = &y - predict(&fit.coefficients, &x).unwrap();
            assert!(a.tr_mul(&resid).amax() < 1e-7);
        }
    }

    #[test]
    fn rank_deficient_is_flagged_and_solved() {
        let (x, y) = random_problem(20, 2, 3);
        let x = x.clone().insert_column(2, 0.0);
        let mut x = x;
        let dup = x.column(0) * 2.0;
        x.set_column(2, &dup);
        let fit = fit_ols(&x, &y).unwrap();
        assert!(fit.rank_deficient);
        let a = augmented(&x);
        let resid = &y - predict(&fit.coefficients, &x).unwrap();
        assert!(a.tr_mul(&resid).amax() < 1e-8);
    }

    #[test]
    fn ridge_zero_is_ols() {
        let (x, y) = random_problem(25, 4, 9);
        let a = fit_ols(&x, &y).unwrap().coefficients.to_vector();
        let b = fit_ridge(&x, &y, 0.0).unwrap().coefficients.to_vector();
        assert!((a - b).amax() < 1e-10);
    }

    #[test]
    fn ridge_hand_example_without_intercept() {
        // (1·1 + 1·1 + 2)⁻¹ · (2 + 2) = 1
        let x = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let y = DVector::from_column_slice(&[2.0, 2.0]);
        let fit = FitSpec::ridge(2.0).without_intercept().fit(&x, &y).unwrap();
        assert!((fit.coefficients.weights[0] - 1.0).abs() < 1e-14);
        assert_eq!(fit.coefficients.intercept, 0.0);
    }

    #[test]
    fn ridge_infinite_penalty_limit() {
        let (x, y) = random_problem(40, 3, 5);
        let (xs, _) = crate::dataio::standardize(
            &crate::dataio::Dataset::from_parts(x, y.clone()).unwrap(),
        )
        .unwrap();
        let fit = fit_ridge(&xs.features, &y, 1e9).unwrap();
        let w = DVector::from_column_slice(&fit.coefficients.weights);
        assert!(w.norm() < 1e-6);
        assert!((fit.coefficients.intercept - y.mean()).abs() < 1e-9);
    }

    #[test]
    fn ridge_shrinks_monotonically() {
        let (x, y) = random_problem(30, 4, 17);
        let mut prev = f64::INFINITY;
        for k in -10..=10 {
            let lambda = 2f64.powi(k);
            let fit = fit_ridge(&x, &y, lambda).unwrap();
            let norm = DVector::from_column_slice(&fit.coefficients.weights).norm();
            assert!(norm <= prev + 1e-12);
            prev = norm;
        }
    }

    #[test]
    fn ridge_rejects_negative() {
        let (x, y) = random_problem(5, 1, 0);
        assert!(matches!(fit_ridge(&x, &y, -0.1), Err(RegressionError::NegativeLambda(_))));
    }

    #[test]
    fn single_row_is_handled() {
        let x = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let y = DVector::from_column_slice(&[4.0]);
        let fit = fit_ols(&x, &y).unwrap();
        assert!(fit.rank_deficient);
        assert!((predict(&fit.coefficients, &x).unwrap()[0] - 4.0).abs() < 1e-12);
    }
}
