use nalgebra::DVector;

use super::{RegressionError, Result};

fn check(y: &DVector<f64>, y_hat: &DVector<f64>) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(RegressionError::Dimension(format!(
            "{} targets vs {} predictions",
            y.len(),
            y_hat.len()
        )));
    }
    if y.is_empty() {
        return Err(RegressionError::Empty);
    }
    Ok(())
}

/// Root mean squared error.
pub fn rmse(y: &DVector<f64>, y_hat: &DVector<f64>) -> Result<f64> {
    check(y, y_hat)?;
    Ok(((y - y_hat).norm_squared() / y.len() as f64).sqrt())
}

/// Coefficient of determination `1 − SS_res / SS_tot`.
pub fn r_squared(y: &DVector<f64>, y_hat: &DVector<f64>) -> Result<f64> {
    check(y, y_hat)?;
    let mean = y.mean();
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(RegressionError::ConstantTarget);
    }
    let ss_res = (y - y_hat).norm_squared();
    Ok(1.0 - ss_res / ss_tot)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&v(&[1.0, 2.0]), &v(&[1.0, 2.0])).unwrap(), 0.0);
        assert_eq!(rmse(&v(&[0.0, 0.0]), &v(&[1.0, 1.0])).unwrap(), 1.0);
        assert_eq!(rmse(&v(&[1.0, 2.0]), &v(&[3.0, 0.0])).unwrap(), 2.0);
        assert!(rmse(&v(&[1.0]), &v(&[1.0, 2.0])).is_err());
        assert!(matches!(rmse(&v(&[]), &v(&[])), Err(RegressionError::Empty)));
    }

    #[test]
    fn r_squared_examples() {
        let y = v(&[1.0, 3.0, 2.0, 6.0]);
        assert_eq!(r_squared(&y, &y).unwrap(), 1.0);
        let mean = v(&[3.0; 4]);
        assert!(r_squared(&y, &mean).unwrap().abs() < 1e-15);
        // SS_res = 8, SS_tot = 0.5
        assert_eq!(r_squared(&v(&[0.0, 1.0]), &v(&[2.0, -1.0])).unwrap(), -15.0);
        assert!(matches!(
            r_squared(&v(&[2.0, 2.0]), &v(&[1.0, 2.0])),
            Err(RegressionError::ConstantTarget)
        ));
    }
}
