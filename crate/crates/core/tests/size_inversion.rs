use proptest::prelude::*;
use renewal_thinning::forward::sampled_size_pmf;
use renewal_thinning::model::{GapDist, ModelSpec, SizeDist};
use renewal_thinning::simulate::{simulate_dataset, FlowRecord, SampledDataset};
use renewal_thinning::size_inversion::{
    bootstrap_sup_ci, build_path, classify_regime, continuation_invert, empirical_sampled_pmf, invert_s,
    risk_r, ContinuationPath, Regime, RegimeThresholds,
};
use renewal_thinning::Pmf;

fn model(size: SizeDist, q: f64) -> ModelSpec {
    ModelSpec::new(size, GapDist::Exponential { rate: 1.0 }, q).unwrap()
}

/// Finitely supported `f_W` on `1..=k`.
fn finite_size_law(max_len: usize) -> impl Strategy<Value = Pmf> {
    prop::collection::vec(0.01f64..1.0, 1..=max_len).prop_map(|w| {
        let total: f64 = w.iter().sum();
        Pmf::from_probs(1, w.into_iter().map(|x| x / total).collect()).unwrap()
    })
}

/// A decreasing path from `1 − q` to 0 whose every step stays inside the disk.
fn random_path(q: f64) -> impl Strategy<Value = ContinuationPath> {
    prop::collection::vec(0.05f64..0.95, 0..6).prop_map(move |fracs| {
        let mut nodes = vec![1.0 - q];
        let mut z = 1.0 - q;
        for f in fracs {
            z -= f * z.min(1.0 - z);
            nodes.push(z);
        }
        // the final jump to 0 needs z < 1 − z
        while z >= 0.5 {
            z -= 0.5 * (1.0 - z);
            nodes.push(z);
        }
        nodes.push(0.0);
        ContinuationPath::custom(q, nodes).unwrap()
    })
}

fn geometric_truth(c: f64, w_max: usize) -> Vec<f64> {
    (1..=w_max).map(|w| (1.0 - c) * c.powi(w as i32 - 1)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn forward_then_invert_recovers_finite_laws(f_w in finite_size_law(12), q in 0.55f64..0.95) {
        let x = sampled_size_pmf(&f_w, q, 12).unwrap();
        let f = invert_s(&x, q, 12).unwrap();
        for w in 1..=12 {
            prop_assert!((f.get(w) - f_w.get(w)).abs() < 1e-8, "w = {}: {} vs {}", w, f.get(w), f_w.get(w));
        }
    }

    #[test]
    fn continuation_equals_direct_inversion_on_any_path(
        (q, path) in (0.55f64..0.95).prop_flat_map(|q| (Just(q), random_path(q))),
        f_w in finite_size_law(12),
    ) {
        let x = sampled_size_pmf(&f_w, q, 12).unwrap();
        let s = invert_s(&x, q, 12).unwrap();
        let t = continuation_invert(&x, q, &path, 12, 12).unwrap();
        prop_assert!(s.sup_distance_upto(&t, 12) < 1e-9);
    }
}

#[test]
fn geometric_round_trip_through_truncated_forward_law() {
    let (c, q) = (0.25, 0.6);
    let m = model(SizeDist::Geometric { c }, q);
    let f_wq = sampled_size_pmf(&m.size_pmf(400), q, 200).unwrap();
    // truncate where the sampled mass drops below 1e-14
    let top = (0..=200).rev().find(|&s| f_wq.get(s) >= 1e-14).unwrap();
    let x = Pmf::new(0, (0..=top).map(|s| f_wq.get(s)).collect(), 0.0).unwrap();
    let s = invert_s(&x, q, 10).unwrap();
    let t = continuation_invert(&x, q, &build_path(q).unwrap(), 10, top).unwrap();
    for (w, want) in geometric_truth(c, 10)
        .into_iter()
        .enumerate()
        .map(|(i, v)| (i + 1, v))
    {
        assert!((s.get(w) - want).abs() < 1e-8, "w = {w}");
        assert!((t.get(w) - s.get(w)).abs() < 1e-9, "w = {w}");
    }
}

#[test]
fn estimate_vanishes_beyond_largest_observed_count() {
    let m = model(SizeDist::Geometric { c: 0.25 }, 0.6);
    let ds = simulate_dataset(&m, 500, 3).unwrap();
    let top = ds.max_sampled_count();
    let f = invert_s(&empirical_sampled_pmf(&ds), 0.6, top + 10).unwrap();
    assert!(f.get(top) != 0.0);
    assert!((top + 1..=top + 10).all(|w| f.get(w) == 0.0));
    let x = empirical_sampled_pmf(&ds);
    assert!(risk_r(&x, 0.6, top + 1) == 0.0 && risk_r(&x, 0.6, top).is_finite());
}

#[test]
fn estimate_is_consistent_as_n_grows() {
    let (c, q) = (0.25, 0.6);
    let m = model(SizeDist::Geometric { c }, q);
    let truth = geometric_truth(c, 5);
    let errors: Vec<f64> = [1_000, 10_000, 100_000, 1_000_000]
        .iter()
        .map(|&n| {
            let ds = simulate_dataset(&m, n, 42).unwrap();
            let f = invert_s(&empirical_sampled_pmf(&ds), q, 5).unwrap();
            (1..=5)
                .map(|w| (f.get(w) - truth[w - 1]).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    assert!(errors.windows(2).all(|e| e[1] < e[0]), "{errors:?}");
    assert!(errors[3] < 0.01, "{errors:?}");
}

#[test]
fn continuation_matches_direct_inversion_on_heavy_tailed_data() {
    let q = 0.7;
    let m = model(SizeDist::DiscretePareto { alpha: 1.5 }, q);
    let ds = simulate_dataset(&m, 1000, 8).unwrap();
    let x = empirical_sampled_pmf(&ds);
    let top = ds.max_sampled_count();
    let s = invert_s(&x, q, 10).unwrap();
    let t = continuation_invert(&x, q, &build_path(q).unwrap(), 10, top).unwrap();
    for w in 1..=10 {
        let rel = (s.get(w) - t.get(w)).abs() / s.get(w).abs().max(f64::MIN_POSITIVE);
        assert!(
            rel < 1e-7 || s.get(w) == t.get(w),
            "w = {w}: {} vs {}",
            s.get(w),
            t.get(w)
        );
    }
}

#[test]
fn bootstrap_radius_ignores_record_order() {
    let m = model(SizeDist::Geometric { c: 0.25 }, 0.6);
    let ds = simulate_dataset(&m, 300, 4).unwrap();
    let mut reversed = ds.clone();
    reversed.records.reverse();
    let a = bootstrap_sup_ci(&ds, 5, 199, 0.9, 17).unwrap();
    let b = bootstrap_sup_ci(&reversed, 5, 199, 0.9, 17).unwrap();
    assert_eq!(a, b);
    assert!(a > 0.0);
}

#[test]
fn bootstrap_radius_vanishes_for_identical_records() {
    let recs = (0..50).map(|_| FlowRecord::new(2, vec![0.5]).unwrap()).collect();
    let ds = SampledDataset::new(0.6, recs, 0).unwrap();
    assert_eq!(bootstrap_sup_ci(&ds, 4, 100, 0.9, 1).unwrap(), 0.0);
    assert!(bootstrap_sup_ci(&ds, 4, 99, 0.9, 1).is_err());
}

#[test]
fn heavy_tailed_risk_grows_at_least_like_the_lower_bound() {
    let (alpha, q) = (1.5, 0.7);
    let m = model(SizeDist::DiscretePareto { alpha }, q);
    let f_wq = sampled_size_pmf(&m.size_pmf(200_000), q, 400).unwrap();
    assert!(f_wq.tail_mass() > 0.0);
    // C = inf_s f_{W_q}(s) s^{α+1} q^{−s} over the tabulated range
    let c = (1..=400)
        .map(|s| f_wq.get(s) * (s as f64).powf(alpha + 1.0) / q.powi(s as i32))
        .fold(f64::INFINITY, f64::min);
    assert!(c > 0.0);
    let mut prev = 0.0;
    for w in 1..=40 {
        let r = risk_r(&f_wq, q, w);
        let bound = c * (w as f64).powf(-alpha - 1.0) / q.powi(w as i32);
        assert!(r >= bound, "w = {w}: R = {r} < {bound}");
        // small w carry the polynomial factor; the exponential takes over quickly
        assert!(w <= 5 || r > prev, "w = {w}");
        prev = r;
    }
    assert!(risk_r(&f_wq, q, 40) / risk_r(&f_wq, q, 10) > 1e3);
}

fn theoretical_regime(size: SizeDist, q: f64) -> Regime {
    let m = model(size, q);
    let f_wq = sampled_size_pmf(&m.size_pmf(200_000), q, 400).unwrap();
    let probe: Vec<usize> = (1..=10).collect();
    classify_regime(&f_wq, q, &probe, RegimeThresholds::default())
        .unwrap()
        .classification
}

fn empirical_regime(size: SizeDist, q: f64, n: usize) -> Regime {
    let ds = simulate_dataset(&model(size, q), n, 6).unwrap();
    let probe: Vec<usize> = (1..=10).collect();
    classify_regime(
        &empirical_sampled_pmf(&ds),
        q,
        &probe,
        RegimeThresholds::default(),
    )
    .unwrap()
    .classification
}

#[test]
fn regime_classification() {
    assert_eq!(
        theoretical_regime(SizeDist::Geometric { c: 0.25 }, 0.6),
        Regime::Stable
    );
    assert_eq!(
        empirical_regime(SizeDist::Geometric { c: 0.25 }, 0.6, 500),
        Regime::Stable
    );
    assert_eq!(
        theoretical_regime(SizeDist::DiscretePareto { alpha: 1.5 }, 0.7),
        Regime::Explosive
    );
    assert_eq!(
        empirical_regime(SizeDist::DiscretePareto { alpha: 1.5 }, 0.7, 1000),
        Regime::Explosive
    );
    // c/q ≤ e^{−3} is sufficient for stability
    for (c, q) in [(0.02, 0.5), (0.04, 0.9), (0.01, 0.25)] {
        assert!(c / q <= (-3.0f64).exp());
        assert_eq!(
            theoretical_regime(SizeDist::Geometric { c }, q),
            Regime::Stable,
            "c = {c}, q = {q}"
        );
    }
}
