use serde::{Deserialize, Serialize};

use super::{DataError, Dataset};

/// Per-feature location and scale of a fitted standard scaler.
///
/// `stds` use the population convention (divisor n). A zero entry marks a
/// constant column, which the transform maps to all zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl ScalerParams {
    pub fn fit(data: &Dataset) -> Result<Self, DataError> {
        let n = data.n();
        if n < 2 {
            return Err(DataError::TooFewRows { needed: 2, found: n });
        }
        let nf = n as f64;
        let mut means = Vec::with_capacity(data.d());
        let mut stds = Vec::with_capacity(data.d());
        for col in data.features.column_iter() {
            let mean = col.sum() / nf;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf;
            let std = var.sqrt();
            means.push(mean);
            stds.push(if is_constant(std, mean) { 0.0 } else { std });
        }
        Ok(Self { means, stds })
    }

    pub fn is_constant(&self, j: usize) -> bool {
        self.stds[j] == 0.0
    }

    pub fn transform(&self, data: &Dataset) -> Result<Dataset, DataError> {
        self.check_dim(data)?;
        let mut out = data.clone();
        for (j, mut col) in out.features.column_iter_mut().enumerate() {
            let (m, s) = (self.means[j], self.stds[j]);
            for v in col.iter_mut() {
                *v = if s == 0.0 { 0.0 } else { (*v - m) / s };
            }
        }
        Ok(out)
    }

    /// Undoes [`transform`](Self::transform); constant columns come back as their mean.
    pub fn inverse_transform(&self, data: &Dataset) -> Result<Dataset, DataError> {
        self.check_dim(data)?;
        let mut out = data.clone();
        for (j, mut col) in out.features.column_iter_mut().enumerate() {
            let (m, s) = (self.means[j], self.stds[j]);
            for v in col.iter_mut() {
                *v = *v * s + m;
            }
        }
        Ok(out)
    }

    fn check_dim(&self, data: &Dataset) -> Result<(), DataError> {
        if data.d() != self.means.len() {
            return Err(DataError::Shape(format!(
                "scaler fitted on {} features, data has {}",
                self.means.len(),
                data.d()
            )));
        }
        Ok(())
    }
}

fn is_constant(std: f64, mean: f64) -> bool {
    std <= 1e-12 * mean.abs().max(1.0)
}

/// Fits a scaler on `data` and returns the transformed copy.
pub fn standardize(data: &Dataset) -> Result<(Dataset, ScalerParams), DataError> {
    let params = ScalerParams::fit(data)?;
    let out = params.transform(data)?;
    Ok((out, params))
}
