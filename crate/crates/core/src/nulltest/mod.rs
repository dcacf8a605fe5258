//! Null-model hypothesis testing for interpretability statistics.
//!
//! A test compares a statistic computed on the target's traces with the same
//! statistic computed on `B` null replicates. Replicate `b` is materialized
//! from the seed `derive_seed(master_seed, b)`, so the result does not depend
//! on the order or the thread in which replicates run.

mod stats;

pub use stats::{
    benjamini_hochberg, bonferroni, bootstrap_ci, correct, effect_size_z, mc_pvalue, null_moments,
    CorrectionMethod, CorrectionResult,
};

use std::borrow::Cow;
use std::fmt;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{component_label_correlations, kfold_cv, MetricKind, ProbeSpec};
use crate::linalg::haar_orthogonal;
use crate::rng;
use crate::toynet::{randomize, record_traces, RandomizationScope, SyntheticTask, ToyModel};
use crate::trace::TraceSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum NullFamily {
    /// Redraw the model's in-scope weights and re-run it on the same inputs.
    WeightRandomization { scope: RandomizationScope },
    /// Shuffle the label rows, leaving activations untouched.
    LabelPermutation,
    /// Multiply each layer's activations by an independent Haar-random
    /// orthogonal matrix.
    OrthogonalRotation,
}

impl fmt::Display for NullFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NullFamily::WeightRandomization { scope } => {
                let s = match scope {
                    RandomizationScope::All => "all",
                    RandomizationScope::BlocksOnly => "blocks_only",
                    RandomizationScope::EmbeddingsOnly => "embeddings_only",
                };
                write!(f, "weight_randomization({s})")
            }
            NullFamily::LabelPermutation => f.write_str("label_permutation"),
            NullFamily::OrthogonalRotation => f.write_str("orthogonal_rotation"),
        }
    }
}

/// A deterministic map from (traces, layer) to a real number where larger
/// means a stronger explanatory fit.
pub trait TestStatistic: Sync {
    fn name(&self) -> String;
    fn evaluate(&self, traces: &TraceSet, layer: usize) -> Result<f64>;
}

/// The built-in statistics, in serializable form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Statistic {
    /// Mean k-fold cross-validated probe metric.
    CvProbe {
        probe: ProbeSpec,
        folds: usize,
        metric: MetricKind,
        cv_seed: u64,
    },
    /// Largest absolute correlation between a top principal component score
    /// and the scalar label.
    TopPcCorrelation { components: usize },
}

impl Statistic {
    pub fn validate(&self) -> Result<()> {
        match self {
            Statistic::CvProbe { probe, folds, .. } => {
                probe.validate()?;
                if *folds < 2 {
                    return Err(Error::Validation(format!("folds must be >= 2, got {folds}")));
                }
            }
            Statistic::TopPcCorrelation { components } => {
                if *components == 0 {
                    return Err(Error::Validation("components must be >= 1".into()));
                }
            }
        }
        Ok(())
    }
}

impl TestStatistic for Statistic {
    fn name(&self) -> String {
        match self {
            Statistic::CvProbe { probe, folds, metric, .. } => {
                let probe = match probe.probe_kind {
                    crate::estimators::ProbeKind::Logistic => "logistic",
                    crate::estimators::ProbeKind::Ridge => "ridge",
                };
                let metric = match metric {
                    MetricKind::Accuracy => "accuracy",
                    MetricKind::R2 => "r2",
                    MetricKind::Pearson => "pearson",
                };
                format!("cv_{probe}_{metric}_k{folds}")
            }
            Statistic::TopPcCorrelation { components } => format!("top{components}_pc_abs_correlation"),
        }
    }

    fn evaluate(&self, traces: &TraceSet, layer: usize) -> Result<f64> {
        match *self {
            Statistic::CvProbe {
                ref probe,
                folds,
                metric,
                cv_seed,
            } => Ok(kfold_cv(traces, layer, probe, folds, cv_seed, metric)?.mean),
            Statistic::TopPcCorrelation { components } => {
                let r = component_label_correlations(traces, layer, components)?;
                Ok(r.iter().fold(0.0f64, |m, c| m.max(c.abs())))
            }
        }
    }
}

/// Where target traces come from and how null replicates are regenerated.
#[derive(Debug, Clone, Copy)]
pub enum TraceSource<'a> {
    /// A toy model run on a fixed input sample; supports every family.
    Model {
        model: &'a ToyModel,
        task: &'a SyntheticTask,
        inputs: &'a [Vec<u32>],
    },
    /// Precomputed traces; weight randomization is unavailable.
    Fixed(&'a TraceSet),
}

impl<'a> TraceSource<'a> {
    pub fn target(&self) -> Result<Cow<'a, TraceSet>> {
        match *self {
            TraceSource::Model { model, task, inputs } => Ok(Cow::Owned(record_traces(model, task, inputs)?)),
            TraceSource::Fixed(t) => Ok(Cow::Borrowed(t)),
        }
    }

    fn supports(&self, family: &NullFamily) -> Result<()> {
        if matches!(family, NullFamily::WeightRandomization { .. }) && matches!(self, TraceSource::Fixed(_)) {
            return Err(Error::Input(
                "weight randomization needs a model, not precomputed traces".into(),
            ));
        }
        Ok(())
    }
}

pub fn permute_labels(traces: &TraceSet, seed: u64) -> TraceSet {
    let mut order: Vec<usize> = (0..traces.n_samples()).collect();
    order.shuffle(&mut rng::stream(seed));
    TraceSet {
        activations: traces.activations.clone(),
        labels: traces.labels.select_rows(&order),
        label_kind: traces.label_kind,
        provenance: format!("{} null=label_permutation seed={seed}", traces.provenance),
    }
}

pub fn rotate_layers(traces: &TraceSet, seed: u64) -> TraceSet {
    let mut r = rng::stream(seed);
    let activations = traces
        .activations
        .iter()
        .map(|a| {
            let q = haar_orthogonal(a.ncols(), &mut r);
            (a.map(|v| v as f64) * q).map(|v| v as f32)
        })
        .collect();
    TraceSet {
        activations,
        labels: traces.labels.clone(),
        label_kind: traces.label_kind,
        provenance: format!("{} null=orthogonal_rotation seed={seed}", traces.provenance),
    }
}

/// Materializes one null replicate of `target` (the traces of `source`).
pub fn null_replicate(source: &TraceSource<'_>, target: &TraceSet, family: &NullFamily, seed: u64) -> Result<TraceSet> {
    match family {
        NullFamily::WeightRandomization { scope } => match *source {
            TraceSource::Model { model, task, inputs } => {
                let null_model = randomize(model, *scope, seed);
                let mut t = record_traces(&null_model, task, inputs)?;
                t.provenance = format!("{} null={family} seed={seed}", t.provenance);
                Ok(t)
            }
            TraceSource::Fixed(_) => Err(Error::Input(
                "weight randomization needs a model, not precomputed traces".into(),
            )),
        },
        NullFamily::LabelPermutation => Ok(permute_labels(target, seed)),
        NullFamily::OrthogonalRotation => Ok(rotate_layers(target, seed)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    #[default]
    Serial,
    /// Replicates on the current rayon pool; results are identical to serial.
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub layer: usize,
    pub statistic: String,
    pub family: NullFamily,
    pub master_seed: u64,
    pub b: usize,
    pub t_obs: f64,
    pub t_null: Vec<f64>,
    pub p_hat: f64,
    pub null_mean: f64,
    pub null_sd: f64,
    /// Absent when the null statistics have zero spread.
    pub z_effect: Option<f64>,
}

impl TestReport {
    pub fn from_statistics(
        layer: usize,
        statistic: String,
        family: NullFamily,
        master_seed: u64,
        t_obs: f64,
        t_null: Vec<f64>,
    ) -> Result<Self> {
        let p_hat = mc_pvalue(t_obs, &t_null)?;
        let (null_mean, null_sd) = null_moments(&t_null);
        let z_effect = effect_size_z(t_obs, &t_null).ok();
        Ok(TestReport {
            layer,
            statistic,
            family,
            master_seed,
            b: t_null.len(),
            t_obs,
            t_null,
            p_hat,
            null_mean,
            null_sd,
            z_effect,
        })
    }
}

/// Tests `statistic` at every layer in `layers`, sharing each null replicate
/// across layers. Returns one report per layer, in the given order.
pub fn run_sweep(
    source: &TraceSource<'_>,
    statistic: &dyn TestStatistic,
    family: &NullFamily,
    layers: &[usize],
    b: usize,
    master_seed: u64,
    execution: Execution,
) -> Result<Vec<TestReport>> {
    if b == 0 {
        return Err(Error::Input("B must be >= 1".into()));
    }
    if layers.is_empty() {
        return Err(Error::Input("no layers to test".into()));
    }
    source.supports(family)?;
    let target = source.target()?;
    if let Some(&l) = layers.iter().find(|&&l| l >= target.n_layers()) {
        return Err(Error::Input(format!(
            "layer {l} out of range (n_layers = {})",
            target.n_layers()
        )));
    }
    let t_obs = layers
        .iter()
        .map(|&l| statistic.evaluate(&target, l))
        .collect::<Result<Vec<_>>>()?;

    let replicate = |index: usize| -> Result<Vec<f64>> {
        let seed = rng::derive_seed(master_seed, index as u64);
        let null = null_replicate(source, &target, family, seed)?;
        layers.iter().map(|&l| statistic.evaluate(&null, l)).collect()
    };
    let results: Vec<Result<Vec<f64>>> = match execution {
        Execution::Serial => (1..=b).map(replicate).collect(),
        Execution::Parallel => (1..=b).into_par_iter().map(replicate).collect(),
    };
    let mut t_null = DMatrix::<f64>::zeros(layers.len(), b);
    for (i, r) in results.into_iter().enumerate() {
        let row = r.map_err(|e| Error::Replicate {
            index: i + 1,
            source: Box::new(e),
        })?;
        t_null.column_mut(i).copy_from_slice(&row);
    }

    let name = statistic.name();
    layers
        .iter()
        .enumerate()
        .map(|(j, &l)| {
            let nulls: Vec<f64> = t_null.row(j).iter().copied().collect();
            TestReport::from_statistics(l, name.clone(), *family, master_seed, t_obs[j], nulls)
        })
        .collect()
}

/// Tests `statistic` at a single layer.
pub fn run_test(
    source: &TraceSource<'_>,
    statistic: &dyn TestStatistic,
    family: &NullFamily,
    layer: usize,
    b: usize,
    master_seed: u64,
    execution: Execution,
) -> Result<TestReport> {
    let mut r = run_sweep(source, statistic, family, &[layer], b, master_seed, execution)?;
    Ok(r.remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub alpha: f64,
    pub n_reps: usize,
    pub b: usize,
    pub rejections: usize,
    pub rate: f64,
}

/// Empirical Type-I error: each repetition draws the target itself from the
/// null family (seeded by `derive_seed(seed, rep)`), tests it with `B`
/// replicates and counts `p̂ ≤ alpha`.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_type1(
    source: &TraceSource<'_>,
    statistic: &dyn TestStatistic,
    family: &NullFamily,
    layer: usize,
    alpha: f64,
    n_reps: usize,
    b: usize,
    seed: u64,
    execution: Execution,
) -> Result<Calibration> {
    if n_reps < 100 {
        return Err(Error::Input(format!("n_reps must be >= 100, got {n_reps}")));
    }
    source.supports(family)?;
    let base = source.target()?;
    let rep = |r: usize| -> Result<bool> {
        let rep_seed = rng::derive_seed(seed, r as u64);
        let target_seed = rng::tagged_seed(rep_seed, "target");
        let test_seed = rng::tagged_seed(rep_seed, "test");
        let report = match (family, source) {
            (NullFamily::WeightRandomization { scope }, TraceSource::Model { model, task, inputs }) => {
                let drawn = randomize(model, *scope, target_seed);
                let src = TraceSource::Model {
                    model: &drawn,
                    task,
                    inputs,
                };
                run_test(&src, statistic, family, layer, b, test_seed, Execution::Serial)?
            }
            _ => {
                let drawn = null_replicate(source, &base, family, target_seed)?;
                run_test(&TraceSource::Fixed(&drawn), statistic, family, layer, b, test_seed, Execution::Serial)?
            }
        };
        Ok(report.p_hat <= alpha)
    };
    let outcomes: Vec<Result<bool>> = match execution {
        Execution::Serial => (0..n_reps).map(rep).collect(),
        Execution::Parallel => (0..n_reps).into_par_iter().map(rep).collect(),
    };
    let mut rejections = 0;
    for (i, o) in outcomes.into_iter().enumerate() {
        let rejected = o.map_err(|e| Error::Replicate {
            index: i,
            source: Box::new(e),
        })?;
        rejections += rejected as usize;
    }
    Ok(Calibration {
        alpha,
        n_reps,
        b,
        rejections,
        rate: rejections as f64 / n_reps as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::LabelKind;

    struct MeanDifference;

    impl TestStatistic for MeanDifference {
        fn name(&self) -> String {
            "mean_difference".into()
        }
        fn evaluate(&self, traces: &TraceSet, layer: usize) -> Result<f64> {
            let x = &traces.activations[layer];
            let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0.0, 0.0, 0.0);
            for i in 0..traces.n_samples() {
                if traces.labels[(i, 0)] == 1.0 {
                    s1 += x[(i, 0)] as f64;
                    n1 += 1.0;
                } else {
                    s0 += x[(i, 0)] as f64;
                    n0 += 1.0;
                }
            }
            Ok(s1 / n1 - s0 / n0)
        }
    }

    struct FailsOnReplicates;

    impl TestStatistic for FailsOnReplicates {
        fn name(&self) -> String {
            "fails".into()
        }
        fn evaluate(&self, traces: &TraceSet, _layer: usize) -> Result<f64> {
            if traces.provenance.contains("null") {
                Err(Error::UndefinedMetric("boom".into()))
            } else {
                Ok(0.0)
            }
        }
    }

    fn small_traces() -> TraceSet {
        let x = DMatrix::from_column_slice(6, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        let y = DMatrix::from_column_slice(6, 1, &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        TraceSet::new(vec![x], y, LabelKind::Binary, "small").unwrap()
    }

    #[test]
    fn serial_and_parallel_agree() {
        let t = small_traces();
        let src = TraceSource::Fixed(&t);
        let a = run_test(&src, &MeanDifference, &NullFamily::LabelPermutation, 0, 50, 7, Execution::Serial).unwrap();
        let b = run_test(&src, &MeanDifference, &NullFamily::LabelPermutation, 0, 50, 7, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        assert!(a.p_hat >= 1.0 / 51.0 && a.p_hat <= 1.0);
    }

    #[test]
    fn failing_replicate_is_reported_with_index() {
        let t = small_traces();
        let err = run_test(&TraceSource::Fixed(&t), &FailsOnReplicates, &NullFamily::LabelPermutation, 0, 3, 0, Execution::Serial)
            .unwrap_err();
        assert!(matches!(err, Error::Replicate { index: 1, .. }), "{err:?}");
    }

    #[test]
    fn fixed_traces_cannot_be_weight_randomized() {
        let t = small_traces();
        let family = NullFamily::WeightRandomization {
            scope: RandomizationScope::All,
        };
        assert!(run_test(&TraceSource::Fixed(&t), &MeanDifference, &family, 0, 3, 0, Execution::Serial).is_err());
    }

    #[test]
    fn rotation_preserves_row_norms() {
        let t = small_traces();
        let r = rotate_layers(&t, 3);
        for i in 0..6 {
            let a = t.activations[0].row(i).map(|v| v as f64).norm();
            let b = r.activations[0].row(i).map(|v| v as f64).norm();
            assert!((a - b).abs() < 1e-5);
        }
        assert_eq!(r.labels, t.labels);
    }

    #[test]
    fn permutation_keeps_label_multiset() {
        let t = small_traces();
        let p = permute_labels(&t, 9);
        assert_eq!(p.labels.sum(), t.labels.sum());
        assert_eq!(p.activations, t.activations);
    }

    #[test]
    fn family_serde_and_display() {
        let f = NullFamily::WeightRandomization {
            scope: RandomizationScope::BlocksOnly,
        };
        let j = serde_json::to_string(&f).unwrap();
        assert_eq!(j, r#"{"family":"weight_randomization","scope":"blocks_only"}"#);
        assert_eq!(serde_json::from_str::<NullFamily>(&j).unwrap(), f);
        assert_eq!(f.to_string(), "weight_randomization(blocks_only)");
    }
}
