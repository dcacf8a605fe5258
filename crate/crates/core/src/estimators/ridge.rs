use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{center, column_means};

/// Multi-output ridge regression fitted on mean-centered data.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeProbe {
    /// `d × m`
    pub weights: DMatrix<f64>,
    /// `m`
    pub intercept: DVector<f64>,
}

impl RidgeProbe {
    pub fn predict(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x * &self.weights;
        for mut row in out.row_iter_mut() {
            row += self.intercept.transpose();
        }
        out
    }
}

/// Solves `W = (XcᵀXc + nλI)⁻¹ XcᵀYc` exactly, with intercept
/// `ȳ - x̄ᵀW`. This minimizes `(1/n)‖XcW - Yc‖² + λ‖W‖²`.
pub fn fit_ridge(x: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Result<RidgeProbe> {
    let (n, d) = x.shape();
    if n == 0 {
        return Err(Error::Input("ridge needs at least one sample".into()));
    }
    if y.nrows() != n {
        return Err(Error::Input(format!("{n} rows in X but {} in Y", y.nrows())));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Validation(format!("lambda must be >= 0, got {lambda}")));
    }
    let x_mean = column_means(x);
    let y_mean = column_means(y);
    let xc = center(x, &x_mean);
    let yc = center(y, &y_mean);

    let xct = xc.transpose();
    let mut a = &xct * &xc;
    let reg = n as f64 * lambda;
    for j in 0..d {
        a[(j, j)] += reg;
    }
    let max_diag = (0..d).map(|j| a[(j, j)]).fold(0.0f64, f64::max);
    let chol = a.cholesky().ok_or_else(|| {
        Error::Singular(format!("normal equations are singular (lambda = {lambda})"))
    })?;
    // Cholesky can succeed on a numerically rank-deficient matrix; a
    // vanishing pivot means the system is singular all the same.
    let min_pivot = chol.l_dirty().diagonal().iter().fold(f64::INFINITY, |m, &v| m.min(v * v));
    if max_diag == 0.0 || min_pivot <= 1e-12 * max_diag {
        return Err(Error::Singular(format!(
            "normal equations are singular (lambda = {lambda})"
        )));
    }
    let weights = chol.solve(&(&xct * &yc));
    let intercept = &y_mean - weights.tr_mul(&x_mean);
    Ok(RidgeProbe { weights, intercept })
}
