use nalgebra::{DMatrix, DVector};

use super::metrics::pearson;
use crate::error::{Error, Result};
use crate::linalg::{center, column_means, symmetric_eigen};
use crate::trace::{LabelKind, TraceSet};

const JACOBI_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaResult {
    /// `k × d`, orthonormal rows.
    pub components: DMatrix<f64>,
    /// Nonincreasing, nonnegative.
    pub explained_variance: Vec<f64>,
    pub mean: DVector<f64>,
}

impl PcaResult {
    /// Projections of the rows of `x` onto the components (`n × k`).
    pub fn transform(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        center(x, &self.mean) * self.components.transpose()
    }
}

/// Top-`k` principal components of `x` from the eigen-decomposition of the
/// sample covariance (divisor `n - 1`). Each component is signed so its
/// largest-magnitude entry is positive.
pub fn pca(x: &DMatrix<f64>, k: usize) -> Result<PcaResult> {
    let (n, d) = x.shape();
    if k == 0 || k > n.min(d) {
        return Err(Error::Input(format!("k = {k} must lie in 1..={}", n.min(d))));
    }
    if n < 2 {
        return Err(Error::Input("pca needs at least 2 samples".into()));
    }
    let mean = column_means(x);
    let xc = center(x, &mean);
    let cov = xc.tr_mul(&xc) / (n as f64 - 1.0);
    let (values, vectors) = symmetric_eigen(&cov, JACOBI_TOL)?;

    let mut components = DMatrix::<f64>::zeros(k, d);
    for c in 0..k {
        let v = vectors.column(c);
        let pivot = (0..d)
            .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()).then(b.cmp(&a)))
            .unwrap_or(0);
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            components[(c, j)] = sign * v[j];
        }
    }
    let explained_variance = values[..k].iter().map(|&v| v.max(0.0)).collect();
    Ok(PcaResult {
        components,
        explained_variance,
        mean,
    })
}

/// Pearson correlation between each of the top-`k` principal-component
/// scores of `layer` and the (binary or real scalar) label.
pub fn component_label_correlations(traces: &TraceSet, layer: usize, k: usize) -> Result<Vec<f64>> {
    match traces.label_kind {
        LabelKind::Binary | LabelKind::Real => {}
        other => {
            return Err(Error::Input(format!(
                "component correlations need binary or real scalar labels, got {other:?}"
            )))
        }
    }
    let x = traces.layer_f64(layer)?;
    let y: Vec<f64> = traces.labels.column(0).iter().map(|&v| v as f64).collect();
    if y.iter().all(|&v| v == y[0]) {
        return Err(Error::UndefinedMetric("labels are constant".into()));
    }
    let fit = pca(&x, k)?;
    let scores = fit.transform(&x);
    scores
        .column_iter()
        .map(|c| {
            let s: Vec<f64> = c.iter().copied().collect();
            pearson(&s, &y)
        })
        .collect()
}
