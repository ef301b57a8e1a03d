//! Non-private least-squares solvers and the evaluation metrics.
//!
//! All fitters take an intercept by default and never penalize it; the
//! penalized objectives are the literal ones
//!
//! * ridge: `‖y − Xβ − b‖² + λ‖β‖²`
//! * lasso: `‖y − Xβ − b‖² + λ‖β‖₁`
//!
//! with no `1/(2n)` rescaling of the loss.

mod lasso;
mod metrics;
mod solve;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lasso::{fit_lasso, fit_lasso_with, LassoSettings};
pub use metrics::{r_squared, rmse};
pub use solve::{fit_ols, fit_ridge};

use crate::dataio::Dataset;

#[derive(Debug, Error)]
pub enum RegressionError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("regularization strength must be finite and non-negative, got {0}")]
    NegativeLambda(f64),
    #[error("ordinary least squares takes no penalty, got lambda = {0}")]
    OlsWithPenalty(f64),
    #[error("empty input")]
    Empty,
    #[error("labels are constant; R² is undefined")]
    ConstantTarget,
    #[error("lasso did not converge in {sweeps} sweeps (last change {last_change:e})")]
    NotConverged {
        sweeps: usize,
        last_change: f64,
        last_iterate: Coefficients,
    },
    #[error("non-finite values in solver input or output")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, RegressionError>;

/// Weight vector plus intercept. The mechanism output that both private
/// trainers perturb is the flattened `[weights..., intercept]` vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl Coefficients {
    pub fn new(weights: Vec<f64>, intercept: f64) -> Self {
        Self { weights, intercept }
    }

    pub fn zeros(dimension: usize) -> Self {
        Self::new(vec![0.0; dimension], 0.0)
    }

    pub fn dimension(&self) -> usize {
        self.weights.len()
    }

    /// Number of perturbable parameters, `d + 1`.
    pub fn n_params(&self) -> usize {
        self.weights.len() + 1
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.n_params(),
            self.weights.iter().copied().chain(std::iter::once(self.intercept)),
        )
    }

    /// Inverse of [`to_vector`](Self::to_vector); the last entry is the intercept.
    pub fn from_vector(v: &DVector<f64>) -> Self {
        assert!(!v.is_empty(), "parameter vector must hold at least the intercept");
        let d = v.len() - 1;
        Self::new(v.rows(0, d).iter().copied().collect(), v[d])
    }

    pub fn is_finite(&self) -> bool {
        self.intercept.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    Ols,
    Ridge,
    Lasso,
}

impl std::fmt::Display for FitKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FitKind::Ols => "ols",
            FitKind::Ridge => "ridge",
            FitKind::Lasso => "lasso",
        })
    }
}

/// Which solver to run and with what penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSpec {
    pub kind: FitKind,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "default_true")]
    pub fit_intercept: bool,
}

fn default_true() -> bool {
    true
}

impl FitSpec {
    pub fn ols() -> Self {
        Self {
            kind: FitKind::Ols,
            lambda: 0.0,
            fit_intercept: true,
        }
    }

    pub fn ridge(lambda: f64) -> Self {
        Self {
            kind: FitKind::Ridge,
            lambda,
            fit_intercept: true,
        }
    }

    pub fn lasso(lambda: f64) -> Self {
        Self {
            kind: FitKind::Lasso,
            lambda,
            fit_intercept: true,
        }
    }

    pub fn without_intercept(mut self) -> Self {
        self.fit_intercept = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(RegressionError::NegativeLambda(self.lambda));
        }
        if self.kind == FitKind::Ols && self.lambda != 0.0 {
            return Err(RegressionError::OlsWithPenalty(self.lambda));
        }
        Ok(())
    }

    pub fn fit(&self, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<FitOutcome> {
        self.validate()?;
        match self.kind {
            FitKind::Ols | FitKind::Ridge => solve::fit_penalized_l2(x, y, self.lambda, self.fit_intercept),
            FitKind::Lasso => {
                lasso::fit_lasso_with(x, y, self.lambda, self.fit_intercept, &LassoSettings::default())
            }
        }
    }

    pub fn fit_dataset(&self, data: &Dataset) -> Result<FitOutcome> {
        self.fit(&data.features, &data.labels)
    }
}

impl std::fmt::Display for FitSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.kind {
            FitKind::Ols => write!(f, "ols"),
            k => write!(f, "{k}(lambda={})", self.lambda),
        }
    }
}

/// Solver result plus diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub coefficients: Coefficients,
    /// The design was numerically rank deficient and a pseudoinverse was used.
    pub rank_deficient: bool,
    /// Coordinate-descent sweeps (zero for closed-form solvers).
    pub sweeps: usize,
}

/// `ŷᵢ = βᵀxᵢ + b`.
pub fn predict(model: &Coefficients, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    if x.ncols() != model.dimension() {
        return Err(RegressionError::Dimension(format!(
            "model has {} weights, input has {} columns",
            model.dimension(),
            x.ncols()
        )));
    }
    let w = DVector::from_column_slice(&model.weights);
    let mut y_hat = x * w;
    y_hat.add_scalar_mut(model.intercept);
    Ok(y_hat)
}

pub(crate) fn check_xy(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if x.nrows() == 0 {
        return Err(RegressionError::Empty);
    }
    if x.nrows() != y.len() {
        return Err(RegressionError::Dimension(format!(
            "{} rows but {} labels",
            x.nrows(),
            y.len()
        )));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(RegressionError::NonFinite);
    }
    Ok(())
}
