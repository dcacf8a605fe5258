use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// `(1 + #{T_null ≥ T_obs}) / (B + 1)`, ties counted as exceedances.
pub fn mc_pvalue(t_obs: f64, t_null: &[f64]) -> Result<f64> {
    if t_null.is_empty() {
        return Err(Error::Input("the null distribution is empty".into()));
    }
    let exceed = t_null.iter().filter(|&&t| t >= t_obs).count();
    Ok((1 + exceed) as f64 / (t_null.len() + 1) as f64)
}

/// Mean and sample standard deviation (divisor `B - 1`; zero when `B = 1`).
pub fn null_moments(t_null: &[f64]) -> (f64, f64) {
    let b = t_null.len() as f64;
    let mean = t_null.iter().sum::<f64>() / b;
    if t_null.len() < 2 {
        return (mean, 0.0);
    }
    let var = t_null.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (b - 1.0);
    (mean, var.sqrt())
}

/// `(T_obs - mean) / sd` over the null statistics.
pub fn effect_size_z(t_obs: f64, t_null: &[f64]) -> Result<f64> {
    if t_null.len() < 2 {
        return Err(Error::Input("effect size needs at least 2 null statistics".into()));
    }
    let (mean, sd) = null_moments(t_null);
    if !(sd > 0.0) {
        return Err(Error::DegenerateNull(format!(
            "all {} null statistics equal {mean}",
            t_null.len()
        )));
    }
    Ok((t_obs - mean) / sd)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionMethod {
    Bonferroni,
    BenjaminiHochberg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionResult {
    pub method: CorrectionMethod,
    pub alpha: f64,
    pub raw: Vec<f64>,
    pub adjusted: Vec<f64>,
    pub reject: Vec<bool>,
}

impl CorrectionResult {
    pub fn n_rejected(&self) -> usize {
        self.reject.iter().filter(|&&r| r).count()
    }
}

fn check_pvalues(pvals: &[f64], alpha: f64) -> Result<()> {
    if let Some(p) = pvals.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
        return Err(Error::Input(format!("p-value {p} is outside (0, 1]")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Input(format!("alpha {alpha} is outside (0, 1)")));
    }
    Ok(())
}

pub fn bonferroni(pvals: &[f64], alpha: f64) -> Result<CorrectionResult> {
    check_pvalues(pvals, alpha)?;
    let m = pvals.len() as f64;
    let adjusted: Vec<f64> = pvals.iter().map(|p| (m * p).min(1.0)).collect();
    let reject = adjusted.iter().map(|&a| a <= alpha).collect();
    Ok(CorrectionResult {
        method: CorrectionMethod::Bonferroni,
        alpha,
        raw: pvals.to_vec(),
        adjusted,
        reject,
    })
}

/// Benjamini–Hochberg step-up. Rejects the `i` smallest p-values for the
/// largest `i` with `p_(i) ≤ iα/m`; adjusted values are the running minimum
/// of `m·p_(j)/j` from the largest rank down, capped at 1.
pub fn benjamini_hochberg(pvals: &[f64], alpha: f64) -> Result<CorrectionResult> {
    check_pvalues(pvals, alpha)?;
    let m = pvals.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvals[a].total_cmp(&pvals[b]).then(a.cmp(&b)));

    let cutoff = (1..=m)
        .rev()
        .find(|&i| pvals[order[i - 1]] <= i as f64 * alpha / m as f64)
        .unwrap_or(0);
    let mut reject = vec![false; m];
    for &idx in &order[..cutoff] {
        reject[idx] = true;
    }

    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for rank in (1..=m).rev() {
        let idx = order[rank - 1];
        running = running.min(pvals[idx] * m as f64 / rank as f64);
        adjusted[idx] = running;
    }
    Ok(CorrectionResult {
        method: CorrectionMethod::BenjaminiHochberg,
        alpha,
        raw: pvals.to_vec(),
        adjusted,
        reject,
    })
}

pub fn correct(method: CorrectionMethod, pvals: &[f64], alpha: f64) -> Result<CorrectionResult> {
    match method {
        CorrectionMethod::Bonferroni => bonferroni(pvals, alpha),
        CorrectionMethod::BenjaminiHochberg => benjamini_hochberg(pvals, alpha),
    }
}

/// Percentile bootstrap interval for the mean, using nearest-rank quantiles
/// of `n_boot` resampled means.
pub fn bootstrap_ci(values: &[f64], level: f64, n_boot: usize, seed: u64) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Input("bootstrap needs at least one value".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Input(format!("level {level} is outside (0, 1)")));
    }
    if n_boot == 0 {
        return Err(Error::Input("n_boot must be >= 1".into()));
    }
    let n = values.len();
    let mut r = rng::stream(seed);
    let mut means: Vec<f64> = (0..n_boot)
        .map(|_| (0..n).map(|_| values[r.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let nearest_rank = |q: f64| {
        let rank = (q * n_boot as f64).ceil() as usize;
        means[rank.clamp(1, n_boot) - 1]
    };
    let tail = (1.0 - level) / 2.0;
    Ok((nearest_rank(tail), nearest_rank(1.0 - tail)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pvalue_formula() {
        assert_eq!(mc_pvalue(1.0, &[0.5; 19]).unwrap(), 0.05);
        assert_eq!(mc_pvalue(0.5, &[0.5, 0.5, 0.5]).unwrap(), 1.0);
        let mut nulls = vec![0.0; 16];
        nulls.extend([2.0; 4]);
        assert!((mc_pvalue(1.0, &nulls).unwrap() - 5.0 / 21.0).abs() < 1e-15);
        assert!(mc_pvalue(1.0, &[]).is_err());
    }

    #[test]
    fn z_scores() {
        // mean 0.5, sample sd 0.1
        let a = 0.1 / 2f64.sqrt();
        let nulls = [0.5 - a, 0.5 + a];
        let (m, sd) = null_moments(&nulls);
        assert!((m - 0.5).abs() < 1e-12);
        assert!((sd - 0.1).abs() < 1e-12);
        assert!((effect_size_z(0.9, &nulls).unwrap() - 4.0).abs() < 1e-9);
        assert_eq!(effect_size_z(0.5, &[0.4, 0.6]).unwrap(), 0.0);
        assert!(matches!(effect_size_z(1.0, &[0.3, 0.3]), Err(Error::DegenerateNull(_))));
    }

    #[test]
    fn bonferroni_examples() {
        let c = bonferroni(&[0.01, 0.4], 0.05).unwrap();
        assert_eq!(c.adjusted, vec![0.02, 0.8]);
        assert_eq!(c.reject, vec![true, false]);
        assert_eq!(bonferroni(&[0.03], 0.05).unwrap().adjusted, vec![0.03]);
        assert_eq!(bonferroni(&[1.0, 1.0], 0.05).unwrap().n_rejected(), 0);
    }

    #[test]
    fn bh_examples() {
        let c = benjamini_hochberg(&[0.01, 0.02, 0.03, 0.04], 0.05).unwrap();
        assert_eq!(c.reject, vec![true; 4]);
        // thresholds .0125/.025/.0375/.05: 0.04 misses the third one
        let c = benjamini_hochberg(&[0.04, 0.04, 0.04, 0.5], 0.05).unwrap();
        assert_eq!(c.n_rejected(), 0);
        assert!(c.adjusted[..3].iter().all(|&a| (a - 0.0533333333).abs() < 1e-9));
        let c = benjamini_hochberg(&[0.03, 0.03, 0.03, 0.5], 0.05).unwrap();
        assert_eq!(c.reject, vec![true, true, true, false]);
        for (a, r) in c.adjusted.iter().zip(&c.raw) {
            assert!(a >= r);
        }
        assert_eq!(benjamini_hochberg(&[0.2, 0.3], 0.05).unwrap().n_rejected(), 0);
    }

    #[test]
    fn bh_adjusted_agrees_with_step_up() {
        let p = [0.001, 0.008, 0.039, 0.041, 0.042, 0.06, 0.074, 0.205];
        let c = benjamini_hochberg(&p, 0.05).unwrap();
        for (a, r) in c.adjusted.iter().zip(&c.reject) {
            assert_eq!(*a <= 0.05, *r);
        }
    }

    #[test]
    fn bootstrap_constant_and_determinism() {
        assert_eq!(bootstrap_ci(&[3.0; 10], 0.9, 100, 1).unwrap(), (3.0, 3.0));
        let v: Vec<f64> = (0..50).map(|i| i as f64).collect();
        assert_eq!(bootstrap_ci(&v, 0.9, 200, 4).unwrap(), bootstrap_ci(&v, 0.9, 200, 4).unwrap());
    }

    #[test]
    fn bootstrap_binomial_interval() {
        // sd of the mean is 0.5/sqrt(1000), so the 95% interval is 0.5 ± 0.031
        let v: Vec<f64> = (0..1000).map(|i| (i % 2) as f64).collect();
        let (lo, hi) = bootstrap_ci(&v, 0.95, 2000, 11).unwrap();
        assert!((lo - 0.469).abs() < 0.02, "{lo}");
        assert!((hi - 0.531).abs() < 0.02, "{hi}");
        assert!((lo - 0.46).abs() <= 0.02 && (hi - 0.54).abs() <= 0.02);
    }
}
