use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Arithmetic mean; NaN for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation (divides by n).
pub fn std_population(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Unbiased sample variance (divides by n − 1).
pub fn variance_sample(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    /// One-sided p-value for the alternative `mean(a) > mean(b)`.
    pub p_value: f64,
}

impl WelchTest {
    pub fn significant(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// Welch's unequal-variance t-test of `mean(a) > mean(b)`.
pub fn welch_greater(a: &[f64], b: &[f64]) -> Option<WelchTest> {
    if a.len() < 2 || b.len() < 2 {
        return None;
    }
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (variance_sample(a) / a.len() as f64, variance_sample(b) / b.len() as f64);
    let se2 = va + vb;
    if se2 == 0.0 {
        let p = if ma > mb { 0.0 } else { 1.0 };
        let t = if ma > mb { f64::INFINITY } else if ma < mb { f64::NEG_INFINITY } else { 0.0 };
        return Some(WelchTest { t, df: f64::INFINITY, p_value: p });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2
        / (va * va / (a.len() as f64 - 1.0) + vb * vb / (b.len() as f64 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).ok()?;
    Some(WelchTest {
        t,
        df,
        p_value: dist.sf(t),
    })
}
