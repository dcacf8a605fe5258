use nalgebra::DMatrix;
use nullprobe::nulltest::{
    benjamini_hochberg, bonferroni, calibrate_type1, mc_pvalue, permute_labels, rotate_layers, Execution,
    NullFamily, Statistic, TraceSource,
};
use nullprobe::rng;
use nullprobe::{LabelKind, TraceSet};
use proptest::prelude::*;

fn pvals() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((1u32..=1000).prop_map(|k| k as f64 / 1000.0), 1..12)
}

proptest! {
    #[test]
    fn p_hat_is_bounded(t_obs in -2.0f64..2.0, nulls in prop::collection::vec(-2.0f64..2.0, 1..50)) {
        let p = mc_pvalue(t_obs, &nulls).unwrap();
        let b = nulls.len() as f64;
        prop_assert!(p >= 1.0 / (b + 1.0) && p <= 1.0);
    }

    #[test]
    fn p_hat_never_rises_with_t_obs(a in -2.0f64..2.0, step in 0.0f64..1.0, nulls in prop::collection::vec(-2.0f64..2.0, 1..50)) {
        prop_assert!(mc_pvalue(a + step, &nulls).unwrap() <= mc_pvalue(a, &nulls).unwrap());
    }

    #[test]
    fn adding_the_observation_to_the_nulls_never_lowers_p(t_obs in -2.0f64..2.0, nulls in prop::collection::vec(-2.0f64..2.0, 1..50)) {
        let mut with = nulls.clone();
        with.push(t_obs);
        prop_assert!(mc_pvalue(t_obs, &with).unwrap() >= mc_pvalue(t_obs, &nulls).unwrap());
    }

    #[test]
    fn bh_rejects_a_superset_of_bonferroni(p in pvals(), alpha in 0.001f64..0.5) {
        let bon = bonferroni(&p, alpha).unwrap();
        let bh = benjamini_hochberg(&p, alpha).unwrap();
        for i in 0..p.len() {
            prop_assert!(!bon.reject[i] || bh.reject[i]);
        }
    }

    #[test]
    fn adjusted_values_dominate_and_decide(p in pvals(), alpha in 0.001f64..0.5) {
        for r in [bonferroni(&p, alpha).unwrap(), benjamini_hochberg(&p, alpha).unwrap()] {
            for i in 0..p.len() {
                prop_assert!(r.adjusted[i] >= r.raw[i] - 1e-15);
                prop_assert!(r.adjusted[i] <= 1.0);
                prop_assert_eq!(r.reject[i], r.adjusted[i] <= alpha);
            }
        }
    }

    #[test]
    fn bh_rejection_is_monotone_in_raw_p(p in pvals(), alpha in 0.001f64..0.5) {
        let bh = benjamini_hochberg(&p, alpha).unwrap();
        for i in 0..p.len() {
            for j in 0..p.len() {
                if bh.reject[j] && p[i] <= p[j] {
                    prop_assert!(bh.reject[i]);
                }
            }
        }
    }

    #[test]
    fn bh_matches_the_step_up_definition(p in pvals(), alpha in 0.001f64..0.5) {
        let m = p.len();
        let mut sorted = p.clone();
        sorted.sort_by(f64::total_cmp);
        let k = (1..=m).rev().find(|&i| sorted[i - 1] <= i as f64 * alpha / m as f64).unwrap_or(0);
        let bh = benjamini_hochberg(&p, alpha).unwrap();
        prop_assert_eq!(bh.n_rejected(), k);
    }
}

fn noise_traces(n: usize, seed: u64) -> TraceSet {
    let mut s = rng::stream(seed);
    let mut g = rng::Gaussian::new();
    let mut x = vec![0.0; n * 3];
    g.fill(&mut s, &mut x, 1.0);
    let y: Vec<f32> = (0..n).map(|i| (i % 2) as f32).collect();
    TraceSet::new(
        vec![DMatrix::from_row_slice(n, 3, &x.iter().map(|&v| v as f32).collect::<Vec<_>>())],
        DMatrix::from_row_slice(n, 1, &y),
        LabelKind::Binary,
        "noise",
    )
    .unwrap()
}

#[test]
fn rejection_is_impossible_below_the_p_floor() {
    let t = noise_traces(40, 3);
    let stat = Statistic::TopPcCorrelation { components: 2 };
    let src = TraceSource::Fixed(&t);
    let fam = NullFamily::LabelPermutation;
    let c = calibrate_type1(&src, &stat, &fam, 0, 0.04, 100, 19, 1, Execution::Serial).unwrap();
    assert_eq!(c.rejections, 0);
    let alpha = 1.0 / 20.0;
    let c = calibrate_type1(&src, &stat, &fam, 0, alpha, 200, 19, 2, Execution::Serial).unwrap();
    assert!(c.rate <= alpha + 3.0 * (alpha / 200.0).sqrt(), "rate {}", c.rate);
}

#[test]
fn calibration_is_deterministic_across_execution_modes() {
    let t = noise_traces(30, 4);
    let stat = Statistic::TopPcCorrelation { components: 1 };
    let src = TraceSource::Fixed(&t);
    let fam = NullFamily::OrthogonalRotation;
    let a = calibrate_type1(&src, &stat, &fam, 0, 0.1, 100, 9, 5, Execution::Serial).unwrap();
    let b = calibrate_type1(&src, &stat, &fam, 0, 0.1, 100, 9, 5, Execution::Parallel).unwrap();
    assert_eq!(a, b);
}

#[test]
fn null_transforms_are_seeded() {
    let t = noise_traces(20, 5);
    assert_eq!(permute_labels(&t, 1), permute_labels(&t, 1));
    assert_ne!(permute_labels(&t, 1).labels, permute_labels(&t, 2).labels);
    assert_eq!(rotate_layers(&t, 1), rotate_layers(&t, 1));
    assert_eq!(rotate_layers(&t, 1).labels, t.labels);
}
