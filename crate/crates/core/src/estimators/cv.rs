use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::logistic::{fit_logistic, fit_logistic_ovr};
use super::metrics::{metric, MetricKind};
use super::ridge::fit_ridge;
use super::{ProbeKind, ProbeSpec};
use crate::error::{Error, Result};
use crate::rng;
use crate::trace::{LabelKind, TraceSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub k: usize,
    pub per_fold_metric: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation across folds.
    pub std: f64,
    pub metric_kind: MetricKind,
}

impl CvResult {
    pub fn from_folds(per_fold_metric: Vec<f64>, metric_kind: MetricKind) -> Self {
        let k = per_fold_metric.len();
        let mean = per_fold_metric.iter().sum::<f64>() / k as f64;
        let var = per_fold_metric.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / k as f64;
        CvResult {
            k,
            per_fold_metric,
            mean,
            std: var.sqrt(),
            metric_kind,
        }
    }
}

/// Assigns each of `n` samples to one of `k` folds.
///
/// Indices are shuffled from `seed` (within each stratum when `strata` is
/// given), strata are concatenated in ascending order and the result is dealt
/// round-robin, so fold sizes differ by at most one and every stratum is
/// spread as evenly as possible.
pub fn fold_assignment(n: usize, k: usize, strata: Option<&[usize]>, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::Input(format!("k must be >= 2, got {k}")));
    }
    if k > n {
        return Err(Error::Input(format!("k = {k} exceeds n_samples = {n}")));
    }
    let mut r = rng::stream(seed);
    let order: Vec<usize> = match strata {
        None => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut r);
            idx
        }
        Some(s) => {
            if s.len() != n {
                return Err(Error::Input(format!("{} strata for {n} samples", s.len())));
            }
            let n_strata = s.iter().max().map_or(0, |m| m + 1);
            let mut groups = vec![Vec::new(); n_strata];
            for (i, &c) in s.iter().enumerate() {
                groups[c].push(i);
            }
            groups
                .into_iter()
                .flat_map(|mut g| {
                    g.shuffle(&mut r);
                    g
                })
                .collect()
        }
    };
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % k;
    }
    Ok(fold)
}

/// Z-scores columns with statistics from `train`; constant columns are only
/// centered.
fn standardize(train: &DMatrix<f64>, test: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = train.nrows() as f64;
    let d = train.ncols();
    let mut mean = DVector::zeros(d);
    let mut scale = DVector::from_element(d, 1.0);
    for j in 0..d {
        let c = train.column(j);
        let m = c.sum() / n;
        let var = c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
        mean[j] = m;
        if var > 0.0 {
            scale[j] = var.sqrt();
        }
    }
    let f = |x: &DMatrix<f64>| DMatrix::from_fn(x.nrows(), d, |i, j| (x[(i, j)] - mean[j]) / scale[j]);
    (f(train), f(test))
}

fn select_rows(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    x.select_rows(rows)
}

/// Fits the probe on `train` rows and returns predictions on `test` rows in
/// label units (class indices for classification, values for regression).
fn fit_predict(
    x_train: &DMatrix<f64>,
    y_train: &DMatrix<f64>,
    x_test: &DMatrix<f64>,
    kind: LabelKind,
    spec: &ProbeSpec,
) -> Result<DMatrix<f64>> {
    match (spec.probe_kind, kind) {
        (ProbeKind::Logistic, LabelKind::Binary) => {
            let y: Vec<f64> = y_train.column(0).iter().copied().collect();
            let p = fit_logistic(x_train, &y, spec)?;
            Ok(DMatrix::from_vec(x_test.nrows(), 1, p.predict(x_test)))
        }
        (ProbeKind::Logistic, LabelKind::Categorical { .. }) => {
            let y: Vec<usize> = y_train.column(0).iter().map(|&v| v as usize).collect();
            let p = fit_logistic_ovr(x_train, &y, spec)?;
            Ok(DMatrix::from_vec(x_test.nrows(), 1, p.predict(x_test)))
        }
        (ProbeKind::Logistic, other) => Err(Error::Input(format!(
            "logistic probe needs classification labels, got {other:?}"
        ))),
        (ProbeKind::Ridge, LabelKind::Binary) => {
            let p = fit_ridge(x_train, y_train, spec.l2_lambda)?;
            let s = p.predict(x_test);
            Ok(s.map(|v| (v >= 0.5) as u8 as f64))
        }
        (ProbeKind::Ridge, LabelKind::Categorical { classes }) => {
            let n_classes = classes as usize;
            let one_hot = DMatrix::from_fn(y_train.nrows(), n_classes, |i, c| {
                (y_train[(i, 0)] as usize == c) as u8 as f64
            });
            let s = fit_ridge(x_train, &one_hot, spec.l2_lambda)?.predict(x_test);
            Ok(DMatrix::from_fn(x_test.nrows(), 1, |i, _| {
                (0..n_classes)
                    .max_by(|&a, &b| s[(i, a)].total_cmp(&s[(i, b)]).then(b.cmp(&a)))
                    .unwrap_or(0) as f64
            }))
        }
        (ProbeKind::Ridge, _) => Ok(fit_ridge(x_train, y_train, spec.l2_lambda)?.predict(x_test)),
    }
}

/// K-fold cross-validated probe metric at one layer.
///
/// Features are standardized with training-fold statistics before each fit.
/// Folds are stratified by class for classification labels. A fold whose
/// training part lacks a class, or whose held-out metric is undefined, is an
/// error rather than being skipped.
pub fn kfold_cv(
    traces: &TraceSet,
    layer: usize,
    spec: &ProbeSpec,
    k: usize,
    seed: u64,
    metric_kind: MetricKind,
) -> Result<CvResult> {
    spec.validate()?;
    let x = traces.layer_f64(layer)?;
    let y = traces.labels_f64();
    let n = traces.n_samples();
    if metric_kind == MetricKind::Accuracy && !traces.label_kind.is_classification() {
        return Err(Error::Input("accuracy needs classification labels".into()));
    }
    let classes = if traces.label_kind.is_classification() {
        Some(traces.class_labels()?)
    } else {
        None
    };
    let fold = fold_assignment(n, k, classes.as_deref(), seed)?;

    let mut per_fold = Vec::with_capacity(k);
    for f in 0..k {
        let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| fold[i] == f);
        if let Some(c) = &classes {
            let first = c[train[0]];
            if train.iter().all(|&i| c[i] == first) {
                return Err(Error::DegenerateFold {
                    fold: f,
                    message: format!("training part contains only class {first}"),
                });
            }
        }
        let (x_train, x_test) = standardize(&select_rows(&x, &train), &select_rows(&x, &test));
        let y_train = select_rows(&y, &train);
        let y_test = select_rows(&y, &test);
        let pred = fit_predict(&x_train, &y_train, &x_test, traces.label_kind, spec).map_err(|e| match e {
            Error::DegenerateLabels(message) => Error::DegenerateFold { fold: f, message },
            other => other,
        })?;
        let m = metric(&pred, &y_test, metric_kind).map_err(|e| match e {
            Error::UndefinedMetric(message) => Error::DegenerateFold { fold: f, message },
            other => other,
        })?;
        per_fold.push(m);
    }
    Ok(CvResult::from_folds(per_fold, metric_kind))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn noise_traces(n: usize, d: usize, seed: u64) -> TraceSet {
        let mut r = rng::stream(seed);
        let mut g = rng::Gaussian::new();
        let x = DMatrix::from_fn(n, d, |_, _| g.sample(&mut r) as f32);
        let y = DMatrix::from_fn(n, 1, |_, _| (rng::uniform(&mut r) < 0.5) as u8 as f32);
        TraceSet::new(vec![x], y, LabelKind::Binary, "noise").unwrap()
    }

    #[test]
    fn leave_one_out_partition() {
        let f = fold_assignment(6, 6, None, 1).unwrap();
        let mut sorted = f.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn stratified_folds_balance_classes() {
        let strata: Vec<usize> = (0..100).map(|i| (i < 30) as usize).collect();
        let f = fold_assignment(100, 10, Some(&strata), 9).unwrap();
        for fold in 0..10 {
            let members: Vec<usize> = (0..100).filter(|&i| f[i] == fold).collect();
            assert_eq!(members.len(), 10);
            assert_eq!(members.iter().filter(|&&i| strata[i] == 1).count(), 3);
        }
    }

    #[test]
    fn invalid_k() {
        assert!(fold_assignment(5, 1, None, 0).is_err());
        assert!(fold_assignment(5, 6, None, 0).is_err());
    }

    #[test]
    fn noise_labels_give_chance_accuracy() {
        let t = noise_traces(1000, 8, 77);
        let cv = kfold_cv(&t, 0, &ProbeSpec::logistic(), 10, 5, MetricKind::Accuracy).unwrap();
        assert!((0.45..=0.55).contains(&cv.mean), "{}", cv.mean);
        assert_eq!(cv.k, 10);
    }

    #[test]
    fn deterministic() {
        let t = noise_traces(120, 4, 1);
        let a = kfold_cv(&t, 0, &ProbeSpec::logistic(), 5, 3, MetricKind::Accuracy).unwrap();
        let b = kfold_cv(&t, 0, &ProbeSpec::logistic(), 5, 3, MetricKind::Accuracy).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn separable_signal_is_found() {
        let mut t = noise_traces(200, 3, 4);
        for i in 0..200 {
            t.activations[0][(i, 1)] += 4.0 * (t.labels[(i, 0)] - 0.5);
        }
        let cv = kfold_cv(&t, 0, &ProbeSpec::logistic(), 10, 0, MetricKind::Accuracy).unwrap();
        assert!(cv.mean > 0.9);
    }

    #[test]
    fn single_class_training_fold_is_an_error() {
        let x = DMatrix::from_fn(4, 2, |i, j| (i + j) as f32);
        let y = DMatrix::from_column_slice(4, 1, &[0.0, 0.0, 0.0, 1.0]);
        let t = TraceSet::new(vec![x], y, LabelKind::Binary, "").unwrap();
        let err = kfold_cv(&t, 0, &ProbeSpec::logistic(), 4, 0, MetricKind::Accuracy).unwrap_err();
        assert!(matches!(err, Error::DegenerateFold { .. }), "{err:?}");
    }

    #[test]
    fn ridge_regression_cv() {
        let mut r = rng::stream(8);
        let mut g = rng::Gaussian::new();
        let x = DMatrix::from_fn(300, 4, |_, _| g.sample(&mut r) as f32);
        let y = DMatrix::from_fn(300, 1, |i, _| x[(i, 0)] * 2.0 - x[(i, 2)] + 0.1 * g.sample(&mut r) as f32);
        let t = TraceSet::new(vec![x], y, LabelKind::Real, "").unwrap();
        let cv = kfold_cv(&t, 0, &ProbeSpec::ridge(1e-4), 5, 0, MetricKind::R2).unwrap();
        assert!(cv.mean > 0.95);
        assert!(cv.per_fold_metric.iter().all(|&m| m <= 1.0));
    }
}
