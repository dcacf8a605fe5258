use nalgebra::{DMatrix, DVector};

use super::ProbeSpec;
use crate::error::{Error, Result};
use crate::linalg::solve_spd_vec;

/// A fitted binary logistic probe.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticProbe {
    pub weights: DVector<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub grad_norm: f64,
}

impl LogisticProbe {
    pub fn decision(&self, x: &DMatrix<f64>) -> DVector<f64> {
        x * &self.weights + DVector::from_element(x.nrows(), self.bias)
    }

    pub fn predict_proba(&self, x: &DMatrix<f64>) -> DVector<f64> {
        self.decision(x).map(sigmoid)
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        self.decision(x).iter().map(|&z| (z >= 0.0) as u8 as f64).collect()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

// log(1 + e^z) without overflow
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Penalized objective `(1/n) Σ [log(1 + e^{z_i}) - y_i z_i] + λ‖w‖²` with
/// `z = X w + b`; the bias is not penalized.
pub fn logistic_objective(x: &DMatrix<f64>, y: &[f64], w: &DVector<f64>, b: f64, lambda: f64) -> f64 {
    let n = x.nrows() as f64;
    let z = x * w;
    let loss: f64 = z.iter().zip(y).map(|(&zi, &yi)| softplus(zi + b) - yi * (zi + b)).sum();
    loss / n + lambda * w.norm_squared()
}

fn with_bias_column(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, d) = x.shape();
    let mut out = DMatrix::<f64>::from_element(n, d + 1, 1.0);
    out.columns_mut(0, d).copy_from(x);
    out
}

/// Fits a binary logistic probe by damped Newton iterations until the
/// gradient norm of the penalized objective is at most `spec.tolerance`.
pub fn fit_logistic(x: &DMatrix<f64>, y: &[f64], spec: &ProbeSpec) -> Result<LogisticProbe> {
    spec.validate()?;
    let (n, d) = x.shape();
    if n != y.len() {
        return Err(Error::Input(format!("{n} rows but {} labels", y.len())));
    }
    if n < 2 {
        return Err(Error::Input("logistic probe needs at least 2 samples".into()));
    }
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Input("logistic labels must be 0 or 1".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("design matrix has non-finite entries".into()));
    }
    let positives = y.iter().filter(|&&v| v == 1.0).count();
    if positives == 0 || positives == n {
        return Err(Error::DegenerateLabels(format!(
            "all {n} labels belong to class {}",
            y[0]
        )));
    }

    let lambda = spec.l2_lambda;
    let xb = with_bias_column(x);
    let yv = DVector::from_column_slice(y);
    let nf = n as f64;
    let mut theta = DVector::<f64>::zeros(d + 1);
    let split = |t: &DVector<f64>| (t.rows(0, d).into_owned(), t[d]);

    let gradient = |theta: &DVector<f64>| -> (DVector<f64>, DVector<f64>) {
        let p = (&xb * theta).map(sigmoid);
        let mut g = xb.tr_mul(&(&p - &yv)) / nf;
        for j in 0..d {
            g[j] += 2.0 * lambda * theta[j];
        }
        (g, p)
    };

    let (mut g, mut p) = gradient(&theta);
    let mut grad_norm = g.norm();
    let mut iterations = 0;
    while grad_norm > spec.tolerance {
        if iterations == spec.max_iter {
            return Err(Error::Convergence { iterations, grad_norm });
        }
        iterations += 1;
        let wts = p.map(|pi| (pi * (1.0 - pi)).sqrt());
        let mut xs = xb.clone();
        for mut col in xs.column_iter_mut() {
            col.component_mul_assign(&wts);
        }
        let mut h = (xs.transpose() * &xs) / nf;
        for j in 0..d {
            h[(j, j)] += 2.0 * lambda;
        }
        // a separable direction with λ = 0 leaves H singular
        let step = match solve_spd_vec(h.clone(), &g) {
            Ok(s) => s,
            Err(_) => {
                for j in 0..=d {
                    h[(j, j)] += 1e-10;
                }
                solve_spd_vec(h, &g).map_err(|_| Error::Convergence { iterations, grad_norm })?
            }
        };
        let (w0, b0) = split(&theta);
        let f0 = logistic_objective(x, y, &w0, b0, lambda);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = &theta - &step * t;
            let (w1, b1) = split(&cand);
            // slack of a few ulps lets converged Newton steps through when
            // the objective change is below rounding
            if logistic_objective(x, y, &w1, b1, lambda) <= f0 + 8.0 * f64::EPSILON * f0.abs().max(1.0) {
                theta = cand;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::Convergence { iterations, grad_norm });
        }
        (g, p) = gradient(&theta);
        grad_norm = g.norm();
    }
    let (weights, bias) = split(&theta);
    Ok(LogisticProbe {
        weights,
        bias,
        iterations,
        grad_norm,
    })
}

/// One-vs-rest logistic probes over the classes present in `classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct OvrProbe {
    pub classes: Vec<usize>,
    pub probes: Vec<LogisticProbe>,
}

impl OvrProbe {
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let scores: Vec<DVector<f64>> = self.probes.iter().map(|p| p.decision(x)).collect();
        (0..x.nrows())
            .map(|i| {
                let best = (0..self.classes.len())
                    .max_by(|&a, &b| scores[a][i].total_cmp(&scores[b][i]).then(b.cmp(&a)))
                    .unwrap_or(0);
                self.classes[best] as f64
            })
            .collect()
    }
}

pub fn fit_logistic_ovr(x: &DMatrix<f64>, classes: &[usize], spec: &ProbeSpec) -> Result<OvrProbe> {
    let mut present: Vec<usize> = classes.to_vec();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        return Err(Error::DegenerateLabels(format!(
            "only class {:?} present",
            present.first()
        )));
    }
    let probes = present
        .iter()
        .map(|&c| {
            let y: Vec<f64> = classes.iter().map(|&v| (v == c) as u8 as f64).collect();
            fit_logistic(x, &y, spec)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OvrProbe {
        classes: present,
        probes,
    })
}
