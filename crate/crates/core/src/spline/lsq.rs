//! Least-squares fitting of scattered samples by a tensor spline.

use nalgebra::{DMatrix, DVector};

use super::basis::{axis_basis, TensorSpline};
use crate::error::{Error, Result};

/// Condition number above which an unregularized normal matrix counts as
/// singular.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct LeastSquaresFit {
    pub spline: TensorSpline,
    /// Euclidean norm of the sample residuals.
    pub residual: f64,
    pub condition: f64,
}

/// Minimizes `Σ (S(x_k, y_k) - v_k)² + λ‖coeff‖²` over splines of the given
/// degree and knot spacing whose basis covers `[0,1]²`.
///
/// The normal equations are solved by SVD. With `λ = 0` a condition
/// number above [`MAX_CONDITION`] is reported as `SingularSystem`.
pub fn fit_least_squares(
    samples: &[(f64, f64, f64)],
    degree: usize,
    spacing: f64,
    origin: f64,
    lambda: f64,
) -> Result<LeastSquaresFit> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("regularization {lambda} must be >= 0")));
    }
    let mut spline = TensorSpline::covering_unit_square(degree, spacing, origin)?;
    let c = spline.count;
    let dim = c * c;
    let mut ata = DMatrix::<f64>::zeros(dim, dim);
    let mut atb = DVector::<f64>::zeros(dim);
    let mut idx = Vec::with_capacity((degree + 1) * (degree + 1));
    let mut val = Vec::with_capacity((degree + 1) * (degree + 1));
    for &(x, y, v) in samples {
        let bx = axis_basis(degree, spline.param(x));
        let by = axis_basis(degree, spline.param(y));
        idx.clear();
        val.clear();
        for ry in 0..=degree {
            let b = by.first - ry as i64 - spline.k_min;
            for rx in 0..=degree {
                let a = bx.first - rx as i64 - spline.k_min;
                let w = bx.values[rx] * by.values[ry];
                if a >= 0 && b >= 0 && (a as usize) < c && (b as usize) < c && w != 0.0 {
                    idx.push(b as usize * c + a as usize);
                    val.push(w);
                }
            }
        }
        for (p, &i) in idx.iter().enumerate() {
            atb[i] += val[p] * v;
            for (q, &j) in idx.iter().enumerate() {
                ata[(i, j)] += val[p] * val[q];
            }
        }
    }
    for i in 0..dim {
        ata[(i, i)] += lambda;
    }
    let svd = ata.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if lambda == 0.0 && condition > MAX_CONDITION {
        return Err(Error::SingularSystem { condition });
    }
    let eps = smax * f64::EPSILON * dim as f64;
    let sol = svd.solve(&atb, eps).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    spline.coeff = sol.iter().copied().collect();
    let residual = samples
        .iter()
        .map(|&(x, y, v)| (spline.eval(x, y) - v).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(LeastSquaresFit {
        spline,
        residual,
        condition,
    })
}
