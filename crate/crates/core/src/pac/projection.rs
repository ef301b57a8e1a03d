use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::PacError;

/// Orthogonal change of basis `y = Vᵀx` for mechanism outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionBasis {
    pub v_t: DMatrix<f64>,
    pub singular_values: DVector<f64>,
}

impl ProjectionBasis {
    pub fn identity(dim: usize) -> Self {
        Self {
            v_t: DMatrix::identity(dim, dim),
            singular_values: DVector::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.v_t.nrows()
    }

    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.v_t * x
    }

    pub fn unproject(&self, y: &DVector<f64>) -> DVector<f64> {
        self.v_t.tr_mul(y)
    }

    /// Largest entry of `|VᵀV − I|`.
    pub fn orthogonality_error(&self) -> f64 {
        let n = self.dim();
        (self.v_t.tr_mul(&self.v_t) - DMatrix::<f64>::identity(n, n)).amax()
    }
}

/// SVD basis of `k` mechanism outputs (one per row) after centering each column.
///
/// Right-singular vectors come first in order of decreasing singular value.
/// With fewer informative directions than columns the basis is completed to a
/// full orthonormal one; all-identical samples give the identity.
pub fn compute_projection(samples: &DMatrix<f64>) -> Result<ProjectionBasis, PacError> {
    let (k, p) = samples.shape();
    if k < 2 {
        return Err(PacError::Projection(format!("need at least 2 samples, got {k}")));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(PacError::Projection("samples contain non-finite values".into()));
    }
    let mut centered = samples.clone();
    for mut col in centered.column_iter_mut() {
        let m = col.mean();
        col.add_scalar_mut(-m);
    }
    let scale = samples.amax().max(1.0);
    if centered.amax() <= 1e-14 * scale {
        log::warn!("projection samples are identical; using the identity basis");
        return Ok(ProjectionBasis::identity(p));
    }

    let svd = centered.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let r = order.len();
    let mut basis = DMatrix::<f64>::zeros(p, p);
    let mut values = DVector::<f64>::zeros(p);
    for (row, &src) in order.iter().enumerate() {
        basis.set_row(row, &v_t.row(src));
        values[row] = svd.singular_values[src];
    }
    if r < p {
        complete_rows(&mut basis, r);
    }
    Ok(ProjectionBasis {
        v_t: basis,
        singular_values: values,
    })
}

/// Fills rows `r..` with an orthonormal complement of the first `r` rows.
fn complete_rows(basis: &mut DMatrix<f64>, r: usize) {
    let p = basis.ncols();
    let mut filled = r;
    for e in 0..p {
        if filled == p {
            break;
        }
        let mut v = DVector::<f64>::zeros(p);
        v[e] = 1.0;
        // two passes of Gram-Schmidt for stability
        for _ in 0..2 {
            for i in 0..filled {
                let row = basis.row(i).transpose();
                let c = row.dot(&v);
                v.axpy(-c, &row, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-6 {
            basis.set_row(filled, &(v / norm).transpose());
            filled += 1;
        }
    }
}
