use nalgebra::{DMatrix, DVector};
use nullprobe::estimators::{
    component_label_correlations, fit_logistic, fit_ridge, fold_assignment, logistic_objective, pca, ProbeSpec,
};
use nullprobe::rng;
use nullprobe::{LabelKind, TraceSet};
use proptest::prelude::*;

fn gaussian_matrix(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
    let mut s = rng::stream(seed);
    let mut g = rng::Gaussian::new();
    let mut v = vec![0.0; n * d];
    g.fill(&mut s, &mut v, 1.0);
    DMatrix::from_row_slice(n, d, &v)
}

fn noisy_labels(x: &DMatrix<f64>, seed: u64) -> Vec<f64> {
    let mut s = rng::stream(seed);
    (0..x.nrows())
        .map(|i| {
            let z = x[(i, 0)] - 0.5 * x[(i, 1)] + 0.3;
            ((rng::uniform(&mut s) < 1.0 / (1.0 + (-z).exp())) as u8) as f64
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn folds_partition_the_sample(n in 2usize..120, k_frac in 0.0f64..1.0, seed in any::<u64>(), stratify in any::<bool>()) {
        let k = 2 + ((n - 2) as f64 * k_frac) as usize;
        let strata: Vec<usize> = (0..n).map(|i| (i * 7 + 3) % 3).collect();
        let f = fold_assignment(n, k, stratify.then_some(strata.as_slice()), seed).unwrap();
        prop_assert_eq!(f.len(), n);
        let mut sizes = vec![0usize; k];
        for &fold in &f {
            prop_assert!(fold < k);
            sizes[fold] += 1;
        }
        let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        prop_assert!(hi - lo <= 1);
    }

    #[test]
    fn pca_is_orthonormal_and_sorted(n in 3usize..40, d in 1usize..8, seed in any::<u64>()) {
        let x = gaussian_matrix(n, d, seed);
        let k = n.min(d);
        let p = pca(&x, k).unwrap();
        let gram = &p.components * p.components.transpose();
        prop_assert!((gram - DMatrix::identity(k, k)).amax() <= 1e-8);
        for w in p.explained_variance.windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
        prop_assert!(p.explained_variance.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn ridge_is_scale_equivariant(seed in any::<u64>(), c in -5.0f64..5.0, lambda in 1e-3f64..1.0) {
        let x = gaussian_matrix(25, 4, seed);
        let y = gaussian_matrix(25, 2, seed ^ 1);
        let a = fit_ridge(&x, &y, lambda).unwrap();
        let b = fit_ridge(&x, &(&y * c), lambda).unwrap();
        let scale = a.weights.amax().max(1.0);
        prop_assert!((&b.weights - &a.weights * c).amax() <= 1e-10 * scale * c.abs().max(1.0));
    }

    #[test]
    fn correlations_ignore_a_common_shift(seed in any::<u64>(), shift in -10.0f32..10.0) {
        let n = 60;
        let x = gaussian_matrix(n, 4, seed);
        let labels: Vec<f32> = (0..n).map(|i| (x[(i, 0)] > 0.0) as u8 as f32).collect();
        let make = |s: f32| {
            TraceSet::new(
                vec![x.map(|v| v as f32 + s)],
                DMatrix::from_row_slice(n, 1, &labels),
                LabelKind::Binary,
                "shift",
            )
            .unwrap()
        };
        let a = component_label_correlations(&make(0.0), 0, 3).unwrap();
        let b = component_label_correlations(&make(shift), 0, 3).unwrap();
        for (u, v) in a.iter().zip(&b) {
            prop_assert!((u - v).abs() < 1e-4);
        }
    }
}

// gradient of (1/n) Σ softplus(z) - y z + λ‖w‖², written out independently
fn analytic_gradient(x: &DMatrix<f64>, y: &[f64], w: &DVector<f64>, b: f64, lambda: f64) -> DVector<f64> {
    let (n, d) = x.shape();
    let mut g = DVector::zeros(d + 1);
    for i in 0..n {
        let z = x.row(i).dot(&w.transpose()) + b;
        let r = 1.0 / (1.0 + (-z).exp()) - y[i];
        for j in 0..d {
            g[j] += r * x[(i, j)] / n as f64;
        }
        g[d] += r / n as f64;
    }
    for j in 0..d {
        g[j] += 2.0 * lambda * w[j];
    }
    g
}

#[test]
fn logistic_solutions_are_stationary() {
    let spec = ProbeSpec::logistic();
    let h = 1e-5;
    for seed in 0..20u64 {
        let x = gaussian_matrix(20, 5, seed);
        let y = noisy_labels(&x, seed + 1000);
        if y.iter().all(|&v| v == y[0]) {
            continue;
        }
        let p = fit_logistic(&x, &y, &spec).unwrap();
        let g = analytic_gradient(&x, &y, &p.weights, p.bias, spec.l2_lambda);
        assert!(g.norm() <= 1e-6, "seed {seed}: |g| = {}", g.norm());
        // central differences of the objective away from the optimum
        let w0 = p.weights.add_scalar(0.3);
        let b0 = p.bias - 0.2;
        let g0 = analytic_gradient(&x, &y, &w0, b0, spec.l2_lambda);
        let f = |w: &DVector<f64>, b: f64| logistic_objective(&x, &y, w, b, spec.l2_lambda);
        for j in 0..=5 {
            let fd = if j < 5 {
                let mut up = w0.clone();
                let mut dn = w0.clone();
                up[j] += h;
                dn[j] -= h;
                (f(&up, b0) - f(&dn, b0)) / (2.0 * h)
            } else {
                (f(&w0, b0 + h) - f(&w0, b0 - h)) / (2.0 * h)
            };
            assert!((fd - g0[j]).abs() <= 1e-4 * g0[j].abs().max(1e-3), "seed {seed} coord {j}");
        }
    }
}

#[test]
fn planted_first_component_tracks_the_label() {
    let n = 500;
    let mut s = rng::stream(11);
    let mut g = rng::Gaussian::new();
    let labels: Vec<f64> = (0..n).map(|_| (rng::uniform(&mut s) < 0.5) as u8 as f64).collect();
    // a strong label direction along (1, 1, 0, 0) plus small isotropic noise
    let mut x = DMatrix::<f64>::zeros(n, 4);
    for i in 0..n {
        for j in 0..4 {
            let signal = if j < 2 { 3.0 * (labels[i] - 0.5) } else { 0.0 };
            x[(i, j)] = signal + 0.1 * g.sample(&mut s);
        }
    }
    let t = TraceSet::new(
        vec![x.map(|v| v as f32)],
        DMatrix::from_iterator(n, 1, labels.iter().map(|&v| v as f32)),
        LabelKind::Binary,
        "planted",
    )
    .unwrap();
    let r = component_label_correlations(&t, 0, 2).unwrap();
    assert!(r[0].abs() > 0.9, "corr {}", r[0]);
}
