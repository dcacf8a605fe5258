//! Probing and summary estimators: the interpretability methods whose
//! outputs get tested against null models.

mod cv;
mod logistic;
mod metrics;
mod pca;
mod ridge;

pub use cv::{fold_assignment, kfold_cv, CvResult};
pub use logistic::{fit_logistic, fit_logistic_ovr, logistic_objective, LogisticProbe, OvrProbe};
pub use metrics::{metric, pearson, MetricKind};
pub use pca::{component_label_correlations, pca, PcaResult};
pub use ridge::{fit_ridge, RidgeProbe};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    Logistic,
    Ridge,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    pub probe_kind: ProbeKind,
    #[serde(default = "default_lambda")]
    pub l2_lambda: f64,
    #[serde(default = "default_tol")]
    pub tolerance: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_lambda() -> f64 {
    1e-2
}
fn default_tol() -> f64 {
    1e-8
}
fn default_max_iter() -> usize {
    200
}

impl Default for ProbeSpec {
    fn default() -> Self {
        ProbeSpec::logistic()
    }
}

impl ProbeSpec {
    pub fn logistic() -> Self {
        ProbeSpec {
            probe_kind: ProbeKind::Logistic,
            l2_lambda: default_lambda(),
            tolerance: default_tol(),
            max_iter: default_max_iter(),
        }
    }

    pub fn ridge(lambda: f64) -> Self {
        ProbeSpec {
            probe_kind: ProbeKind::Ridge,
            l2_lambda: lambda,
            ..ProbeSpec::logistic()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return Err(Error::Validation(format!("l2_lambda must be >= 0, got {}", self.l2_lambda)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Validation(format!("tolerance must be > 0, got {}", self.tolerance)));
        }
        if self.max_iter == 0 {
            return Err(Error::Validation("max_iter must be >= 1".into()));
        }
        Ok(())
    }
}
