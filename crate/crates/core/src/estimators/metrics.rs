use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Accuracy,
    R2,
    Pearson,
}

/// Sample Pearson correlation.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Input(format!("lengths differ: {} vs {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::UndefinedMetric("pearson needs at least 2 points".into()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedMetric("pearson correlation with a zero-variance input".into()));
    }
    Ok(sab / (saa.sqrt() * sbb.sqrt()))
}

/// Accuracy is the fraction of rows matching exactly. R² is
/// `1 - SS_res/SS_tot` per output column, averaged uniformly; Pearson is
/// likewise averaged over columns.
pub fn metric(predictions: &DMatrix<f64>, truth: &DMatrix<f64>, kind: MetricKind) -> Result<f64> {
    if predictions.shape() != truth.shape() {
        return Err(Error::Input(format!(
            "prediction shape {:?} differs from truth shape {:?}",
            predictions.shape(),
            truth.shape()
        )));
    }
    let n = truth.nrows();
    if n == 0 {
        return Err(Error::UndefinedMetric("no samples".into()));
    }
    match kind {
        MetricKind::Accuracy => {
            let hits = (0..n).filter(|&i| predictions.row(i) == truth.row(i)).count();
            Ok(hits as f64 / n as f64)
        }
        MetricKind::R2 => {
            let mut total = 0.0;
            for (p, t) in predictions.column_iter().zip(truth.column_iter()) {
                let mean = t.sum() / n as f64;
                let ss_tot: f64 = t.iter().map(|v| (v - mean).powi(2)).sum();
                if ss_tot == 0.0 {
                    return Err(Error::UndefinedMetric("R² with zero-variance truth".into()));
                }
                let ss_res: f64 = p.iter().zip(t.iter()).map(|(a, b)| (a - b).powi(2)).sum();
                total += 1.0 - ss_res / ss_tot;
            }
            Ok(total / truth.ncols() as f64)
        }
        MetricKind::Pearson => {
            let mut total = 0.0;
            for (p, t) in predictions.column_iter().zip(truth.column_iter()) {
                let p: Vec<f64> = p.iter().copied().collect();
                let t: Vec<f64> = t.iter().copied().collect();
                if t.iter().all(|&v| v == t[0]) {
                    return Err(Error::UndefinedMetric("pearson with zero-variance truth".into()));
                }
                total += pearson(&p, &t)?;
            }
            Ok(total / truth.ncols() as f64)
        }
    }
}
