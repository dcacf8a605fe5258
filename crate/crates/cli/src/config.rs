//! Run configuration shared by `gen`, `probe` and `test`.
//!
//! A config is a single JSON object. Unknown keys are rejected and every
//! field is validated before any computation starts. Omitted seeds derive
//! from the top-level `seed`:
//!
//! | seed      | default      |
//! |-----------|--------------|
//! | `model`   | `seed`       |
//! | `plant`   | `seed + 7`   |
//! | `task`    | `seed + 100` |
//! | `inputs`  | `seed + 200` |
//! | `cv`      | `1`          |
//! | `test`    | `seed`       |

use std::fs;
use std::path::Path;

use nullprobe::estimators::{MetricKind, ProbeKind, ProbeSpec};
use nullprobe::nulltest::{CorrectionMethod, NullFamily, Statistic};
use nullprobe::toynet::{RandomizationScope, SyntheticTask, TaskKind, ToyModelConfig};
use nullprobe::LabelKind;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: ToyModelConfig,
    #[serde(default = "default_task")]
    pub task: TaskKind,
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    /// Label-informative structure planted into the otherwise random model.
    #[serde(default)]
    pub plant: Option<PlantConfig>,
    /// Recorded layers to analyse; all of them when omitted.
    #[serde(default)]
    pub layers: Option<Vec<usize>>,
    /// Defaults to logistic for classification labels, ridge otherwise.
    #[serde(default)]
    pub probe: Option<ProbeSpec>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    /// Defaults to accuracy for classification labels, r2 otherwise.
    #[serde(default)]
    pub metric: Option<MetricKind>,
    #[serde(default = "default_family")]
    pub null_family: NullFamily,
    #[serde(default = "default_b_null")]
    pub b_null: usize,
    #[serde(default = "default_b_chance")]
    pub b_chance: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_correction")]
    pub correction: CorrectionMethod,
    #[serde(default)]
    pub bootstrap: BootstrapConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub seeds: SeedOverrides,
    /// Worker threads for null replicates; serial when omitted.
    #[serde(default)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    pub layer: usize,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapConfig {
    pub level: f64,
    pub n_boot: usize,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            level: 0.95,
            n_boot: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedOverrides {
    pub model: Option<u64>,
    pub plant: Option<u64>,
    pub task: Option<u64>,
    pub inputs: Option<u64>,
    pub cv: Option<u64>,
    pub test: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub model: u64,
    pub plant: u64,
    pub task: u64,
    pub inputs: u64,
    pub cv: u64,
    pub test: u64,
}

fn default_task() -> TaskKind {
    TaskKind::sentiment()
}
fn default_n_samples() -> usize {
    200
}
fn default_folds() -> usize {
    10
}
fn default_family() -> NullFamily {
    NullFamily::WeightRandomization {
        scope: RandomizationScope::All,
    }
}
fn default_b_null() -> usize {
    39
}
fn default_b_chance() -> usize {
    99
}
fn default_alpha() -> f64 {
    0.05
}
fn default_correction() -> CorrectionMethod {
    CorrectionMethod::BenjaminiHochberg
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config uses defaults")
    }
}

impl RunConfig {
    /// Parses a config, reporting the JSON path of the first bad field.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::config(path, e.into_inner().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn seeds(&self) -> Seeds {
        let s = self.seed;
        let o = &self.seeds;
        Seeds {
            model: o.model.unwrap_or(s),
            plant: o.plant.unwrap_or(s.wrapping_add(7)),
            task: o.task.unwrap_or(s.wrapping_add(100)),
            inputs: o.inputs.unwrap_or(s.wrapping_add(200)),
            cv: o.cv.unwrap_or(1),
            test: o.test.unwrap_or(s),
        }
    }

    pub fn build_task(&self) -> Result<SyntheticTask> {
        Ok(SyntheticTask::new(
            self.task,
            self.model.vocab_size,
            self.model.max_seq_len,
            self.seeds().task,
        )?)
    }

    pub fn label_kind(&self) -> Result<LabelKind> {
        Ok(self.build_task()?.label_kind())
    }

    pub fn probe_for(&self, kind: LabelKind) -> ProbeSpec {
        self.probe.unwrap_or_else(|| {
            if kind.is_classification() {
                ProbeSpec::logistic()
            } else {
                ProbeSpec::ridge(1e-2)
            }
        })
    }

    pub fn metric_for(&self, kind: LabelKind) -> MetricKind {
        self.metric.unwrap_or(if kind.is_classification() {
            MetricKind::Accuracy
        } else {
            MetricKind::R2
        })
    }

    pub fn statistic_for(&self, kind: LabelKind) -> Statistic {
        Statistic::CvProbe {
            probe: self.probe_for(kind),
            folds: self.folds,
            metric: self.metric_for(kind),
            cv_seed: self.seeds().cv,
        }
    }

    /// Layers to analyse given the number of recorded layers.
    pub fn layers_for(&self, n_layers: usize) -> Result<Vec<usize>> {
        match &self.layers {
            None => Ok((0..n_layers).collect()),
            Some(ls) => {
                if ls.is_empty() {
                    return Err(CliError::config("layers", "must list at least one layer"));
                }
                if let Some(l) = ls.iter().find(|&&l| l >= n_layers) {
                    return Err(CliError::config(
                        "layers",
                        format!("layer {l} out of range (0..{n_layers})"),
                    ));
                }
                Ok(ls.clone())
            }
        }
    }

    /// Checks the model-independent fields plus their consistency with the
    /// toy model and task.
    pub fn validate(&self) -> Result<()> {
        self.model
            .validate()
            .map_err(|e| CliError::config("model", e.to_string()))?;
        let kind = self.build_task().map_err(|e| CliError::config("task", e.to_string()))?;
        let kind = kind.label_kind();
        if let Some(p) = &self.plant {
            if p.layer > self.model.n_layers {
                return Err(CliError::config(
                    "plant.layer",
                    format!("must be <= n_layers ({})", self.model.n_layers),
                ));
            }
            if !(0.0..=1.0).contains(&p.alpha) {
                return Err(CliError::config("plant.alpha", "must lie in [0, 1]"));
            }
        }
        self.layers_for(self.model.n_layers + 1)?;
        self.validate_analysis(kind, self.n_samples)
    }

    /// Checks the fields that apply to any trace set with `kind` labels and
    /// `n_samples` inputs.
    pub fn validate_analysis(&self, kind: LabelKind, n_samples: usize) -> Result<()> {
        if n_samples < 2 {
            return Err(CliError::config("n_samples", "must be >= 2"));
        }
        if self.folds < 2 || self.folds > n_samples {
            return Err(CliError::config(
                "folds",
                format!("must lie in 2..={n_samples}, got {}", self.folds),
            ));
        }
        let probe = self.probe_for(kind);
        probe
            .validate()
            .map_err(|e| CliError::config("probe", e.to_string()))?;
        if probe.probe_kind == ProbeKind::Logistic && !kind.is_classification() {
            return Err(CliError::config("probe", "logistic probes need classification labels"));
        }
        match (self.metric_for(kind), kind.is_classification()) {
            (MetricKind::Accuracy, false) => {
                return Err(CliError::config("metric", "accuracy needs classification labels"))
            }
            (MetricKind::R2 | MetricKind::Pearson, true) => {
                return Err(CliError::config("metric", "r2 and pearson need real-valued labels"))
            }
            _ => {}
        }
        if self.b_null == 0 {
            return Err(CliError::config("b_null", "must be >= 1"));
        }
        if self.b_chance == 0 {
            return Err(CliError::config("b_chance", "must be >= 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CliError::config("alpha", "must lie in (0, 1)"));
        }
        if !(self.bootstrap.level > 0.0 && self.bootstrap.level < 1.0) {
            return Err(CliError::config("bootstrap.level", "must lie in (0, 1)"));
        }
        if self.bootstrap.n_boot == 0 {
            return Err(CliError::config("bootstrap.n_boot", "must be >= 1"));
        }
        if self.threads == Some(0) {
            return Err(CliError::config("threads", "must be >= 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_valid() {
        let c = RunConfig::from_json("{}").unwrap();
        c.validate().unwrap();
        assert_eq!(c.n_samples, 200);
        assert_eq!(c.b_null, 39);
    }

    #[test]
    fn derived_seeds() {
        let c = RunConfig::from_json(r#"{"seed": 5, "seeds": {"cv": 9}}"#).unwrap();
        let s = c.seeds();
        assert_eq!((s.model, s.plant, s.task, s.inputs, s.cv, s.test), (5, 12, 105, 205, 9, 5));
    }

    #[test]
    fn unknown_key_names_its_path() {
        let err = RunConfig::from_json(r#"{"bootstrap": {"level": 0.9, "n_boot": 10, "extra": 1}}"#).unwrap_err();
        match err {
            CliError::Config { path, .. } => assert_eq!(path, "bootstrap.extra"),
            other => panic!("unexpected {other:?}"),
        }
        let err = RunConfig::from_json(r#"{"task": {"kind": "token_colour"}}"#).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn inconsistent_fields_are_rejected() {
        for bad in [
            r#"{"alpha": 1.5}"#,
            r#"{"folds": 1}"#,
            r#"{"layers": [9]}"#,
            r#"{"plant": {"layer": 2, "alpha": 2.0}}"#,
            r#"{"task": {"kind": "token_coords"}, "metric": "accuracy"}"#,
            r#"{"task": {"kind": "token_coords"}, "probe": {"probe_kind": "logistic"}}"#,
            r#"{"threads": 0}"#,
        ] {
            let c = RunConfig::from_json(bad).unwrap();
            assert!(c.validate().is_err(), "{bad}");
        }
    }

    #[test]
    fn real_labels_default_to_ridge_r2() {
        let c = RunConfig::from_json(r#"{"task": {"kind": "token_coords"}}"#).unwrap();
        c.validate().unwrap();
        let kind = c.label_kind().unwrap();
        assert_eq!(c.probe_for(kind).probe_kind, ProbeKind::Ridge);
        assert_eq!(c.metric_for(kind), MetricKind::R2);
    }
}
