//! Report types written by `probe` and `test`, and the renderers behind
//! `report`.
//!
//! # CSV columns
//!
//! `probe.csv`: `layer,metric,cv_mean,cv_std,ci_lo,ci_hi`
//!
//! `test.csv`: `layer,metric,cv_mean,cv_std,ci_lo,ci_hi,chance_p,chance_p_adj,chance_reject,chance_z,null_mean,null_sd,null_p,null_p_adj,null_reject,null_z`
//!
//! `null_hist.csv`: `baseline,layer,bin,lo,hi,count,t_obs`
//!
//! An undefined Z score is written as an empty field.

use std::fmt::Write as _;

use nullprobe::estimators::{CvResult, MetricKind};
use nullprobe::nulltest::{CorrectionResult, TestReport};
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, Seeds};
use crate::error::{CliError, Result};

pub const PROBE_CSV_HEADER: &str = "layer,metric,cv_mean,cv_std,ci_lo,ci_hi";
pub const TEST_CSV_HEADER: &str = "layer,metric,cv_mean,cv_std,ci_lo,ci_hi,chance_p,chance_p_adj,chance_reject,chance_z,null_mean,null_sd,null_p,null_p_adj,null_reject,null_z";
pub const HIST_CSV_HEADER: &str = "baseline,layer,bin,lo,hi,count,t_obs";
pub const HIST_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeRow {
    pub layer: usize,
    pub cv: CvResult,
    /// Percentile bootstrap interval for the mean fold metric.
    pub ci: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeReport {
    pub source: String,
    pub statistic: String,
    pub metric: MetricKind,
    pub seeds: Option<Seeds>,
    pub config: RunConfig,
    pub rows: Vec<ProbeRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerRow {
    pub layer: usize,
    pub cv: CvResult,
    pub ci: (f64, f64),
    /// Test against shuffled labels.
    pub chance: TestReport,
    pub chance_p_adjusted: f64,
    pub chance_reject: bool,
    /// Test against the configured null family.
    pub null: TestReport,
    pub null_p_adjusted: f64,
    pub null_reject: bool,
}

/// A full layer sweep. Corrections treat the sweep as one family of tests,
/// separately for the chance baseline and the null family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSweepReport {
    pub source: String,
    pub statistic: String,
    pub metric: MetricKind,
    pub seeds: Option<Seeds>,
    pub config: RunConfig,
    pub chance_correction: CorrectionResult,
    pub null_correction: CorrectionResult,
    pub rows: Vec<LayerRow>,
}

impl LayerSweepReport {
    pub fn null_rejections(&self) -> Vec<usize> {
        self.rows.iter().filter(|r| r.null_reject).map(|r| r.layer).collect()
    }
}

/// Parses a sweep report and checks that it re-serializes to the same value.
pub fn validate_report(json: &str) -> Result<LayerSweepReport> {
    let de = &mut serde_json::Deserializer::from_str(json);
    let report: LayerSweepReport = serde_path_to_error::deserialize(de)
        .map_err(|e| CliError::config(e.path().to_string(), e.into_inner().to_string()))?;
    let again: LayerSweepReport = serde_json::from_str(&to_json(&report)?)
        .map_err(|e| CliError::config(".", e.to_string()))?;
    if again != report {
        return Err(CliError::config(".", "report does not survive a round trip"));
    }
    let n = report.rows.len();
    if report.chance_correction.raw.len() != n || report.null_correction.raw.len() != n {
        return Err(CliError::config("rows", "corrections do not cover every layer"));
    }
    Ok(report)
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::config(".", e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn metric_name(m: MetricKind) -> &'static str {
    match m {
        MetricKind::Accuracy => "accuracy",
        MetricKind::R2 => "r2",
        MetricKind::Pearson => "pearson",
    }
}

fn opt(z: Option<f64>) -> String {
    z.map(|v| v.to_string()).unwrap_or_default()
}

pub fn probe_csv(r: &ProbeReport) -> String {
    let mut s = format!("{PROBE_CSV_HEADER}\n");
    for row in &r.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            row.layer,
            metric_name(r.metric),
            row.cv.mean,
            row.cv.std,
            row.ci.0,
            row.ci.1
        );
    }
    s
}

pub fn test_csv(r: &LayerSweepReport) -> String {
    let mut s = format!("{TEST_CSV_HEADER}\n");
    for row in &r.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            row.layer,
            metric_name(r.metric),
            row.cv.mean,
            row.cv.std,
            row.ci.0,
            row.ci.1,
            row.chance.p_hat,
            row.chance_p_adjusted,
            row.chance_reject,
            opt(row.chance.z_effect),
            row.null.null_mean,
            row.null.null_sd,
            row.null.p_hat,
            row.null_p_adjusted,
            row.null_reject,
            opt(row.null.z_effect),
        );
    }
    s
}

/// Equal-width histogram of the null statistics, `HIST_BINS` bins spanning
/// their range; a zero-width range puts everything in the first bin.
pub fn histogram(values: &[f64]) -> Vec<(f64, f64, usize)> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / HIST_BINS as f64;
    let mut counts = vec![0usize; HIST_BINS];
    for &v in values {
        let i = if width > 0.0 {
            (((v - lo) / width) as usize).min(HIST_BINS - 1)
        } else {
            0
        };
        counts[i] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (lo + width * i as f64, lo + width * (i + 1) as f64, c))
        .collect()
}

pub fn histogram_csv(r: &LayerSweepReport) -> String {
    let mut s = format!("{HIST_CSV_HEADER}\n");
    for row in &r.rows {
        for (name, t) in [("chance", &row.chance), ("null", &row.null)] {
            for (i, (lo, hi, c)) in histogram(&t.t_null).into_iter().enumerate() {
                let _ = writeln!(s, "{name},{},{i},{lo},{hi},{c},{}", row.layer, t.t_obs);
            }
        }
    }
    s
}

fn fmt_z(z: Option<f64>) -> String {
    z.map(|v| format!("{v:.2}")).unwrap_or_else(|| "n/a".into())
}

fn mark(reject: bool) -> &'static str {
    if reject {
        "yes"
    } else {
        "no"
    }
}

pub fn sweep_markdown(r: &LayerSweepReport) -> String {
    let c = &r.config;
    let mut s = String::new();
    let _ = writeln!(s, "# Layer sweep: {}\n", r.statistic);
    let _ = writeln!(s, "- source: {}", r.source);
    let _ = writeln!(
        s,
        "- chance baseline: label_permutation, B = {}, {:?} at alpha = {}",
        c.b_chance, r.chance_correction.method, r.chance_correction.alpha
    );
    if let Some(first) = r.rows.first() {
        let _ = writeln!(
            s,
            "- null family: {}, B = {}, {:?} at alpha = {}",
            first.null.family, first.null.b, r.null_correction.method, r.null_correction.alpha
        );
    }
    let _ = writeln!(
        s,
        "- rejections: {} of {} layers vs chance, {} of {} vs null\n",
        r.chance_correction.n_rejected(),
        r.rows.len(),
        r.null_correction.n_rejected(),
        r.rows.len()
    );
    let _ = writeln!(
        s,
        "| layer | {} | {}% CI | p (chance) | adj. | Z (chance) | reject | null mean | p (null) | adj. | Z (null) | reject |",
        metric_name(r.metric),
        c.bootstrap.level * 100.0
    );
    let _ = writeln!(s, "|---|---|---|---|---|---|---|---|---|---|---|---|");
    for row in &r.rows {
        let _ = writeln!(
            s,
            "| {} | {:.4} | [{:.4}, {:.4}] | {:.4} | {:.4} | {} | {} | {:.4} | {:.4} | {:.4} | {} | {} |",
            row.layer,
            row.cv.mean,
            row.ci.0,
            row.ci.1,
            row.chance.p_hat,
            row.chance_p_adjusted,
            fmt_z(row.chance.z_effect),
            mark(row.chance_reject),
            row.null.null_mean,
            row.null.p_hat,
            row.null_p_adjusted,
            fmt_z(row.null.z_effect),
            mark(row.null_reject),
        );
    }
    s.push_str("\nPlot data: `summary.csv` (per layer) and `null_hist.csv` (null distributions).\n");
    s
}

pub fn probe_markdown(r: &ProbeReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Probe sweep: {}\n", r.statistic);
    let _ = writeln!(s, "- source: {}\n", r.source);
    let _ = writeln!(
        s,
        "| layer | {} | std | {}% CI |",
        metric_name(r.metric),
        r.config.bootstrap.level * 100.0
    );
    let _ = writeln!(s, "|---|---|---|---|");
    for row in &r.rows {
        let _ = writeln!(
            s,
            "| {} | {:.4} | {:.4} | [{:.4}, {:.4}] |",
            row.layer, row.cv.mean, row.cv.std, row.ci.0, row.ci.1
        );
    }
    s.push_str("\nPlot data: `summary.csv`.\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_counts_everything() {
        let h = histogram(&[0.0, 0.05, 0.5, 1.0, 1.0]);
        assert_eq!(h.len(), HIST_BINS);
        assert_eq!(h.iter().map(|b| b.2).sum::<usize>(), 5);
        assert_eq!(h[0].2, 2);
        assert_eq!(h[HIST_BINS - 1].2, 2);
        let flat = histogram(&[0.3, 0.3]);
        assert_eq!(flat[0].2, 2);
    }
}
