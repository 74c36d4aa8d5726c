use proptest::prelude::*;
use renewal_thinning::series::taylor_remainder_check;
use renewal_thinning::CoeffSeries;

/// A series with zero constant term and linear coefficient bounded away
/// from zero, so the reversion stays well conditioned in double precision.
fn revertible(order: usize) -> impl Strategy<Value = CoeffSeries> {
    (
        prop_oneof![0.5f64..2.0, -2.0f64..-0.5],
        prop::collection::vec(-0.3f64..0.3, order - 1),
    )
        .prop_map(|(a1, rest)| {
            let mut c = vec![0.0, a1];
            c.extend(rest);
            CoeffSeries::new(c).unwrap()
        })
}

fn zero_constant(order: usize, scale: f64) -> impl Strategy<Value = CoeffSeries> {
    prop::collection::vec(-scale..scale, order).prop_map(|rest| {
        let mut c = vec![0.0];
        c.extend(rest);
        CoeffSeries::new(c).unwrap()
    })
}

fn any_series(order: usize) -> impl Strategy<Value = CoeffSeries> {
    prop::collection::vec(-1.0f64..1.0, order + 1).prop_map(|c| CoeffSeries::new(c).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn reversion_is_a_two_sided_inverse(a in revertible(12)) {
        let b = a.revert().unwrap();
        let id = CoeffSeries::identity(12);
        prop_assert!(b.compose(&a).unwrap().max_abs_diff(&id) < 1e-9);
        prop_assert!(a.compose(&b).unwrap().max_abs_diff(&id) < 1e-9);
    }

    #[test]
    fn reversion_is_an_involution(a in revertible(10)) {
        let back = a.revert().unwrap().revert().unwrap();
        prop_assert!(back.max_abs_diff(&a) < 1e-9);
    }

    #[test]
    fn composition_is_associative(
        x in any_series(8),
        y in zero_constant(8, 1.0),
        z in zero_constant(8, 1.0),
    ) {
        let left = x.compose(&y).unwrap().compose(&z).unwrap();
        let right = x.compose(&y.compose(&z).unwrap()).unwrap();
        prop_assert!(left.max_abs_diff(&right) < 1e-9);
    }

    #[test]
    fn composition_distributes_over_sums(
        x in any_series(8),
        w in any_series(8),
        y in zero_constant(8, 1.0),
    ) {
        let lhs = x.add(&w).compose(&y).unwrap();
        let rhs = x.compose(&y).unwrap().add(&w.compose(&y).unwrap());
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-9);
    }

    #[test]
    fn convolution_is_commutative(a in any_series(10), b in any_series(10)) {
        prop_assert!(a.convolve(&b).max_abs_diff(&b.convolve(&a)) < 1e-12);
    }

    #[test]
    fn remainder_inequalities_hold(
        x in zero_constant(8, 1.0),
        y in zero_constant(8, 1.0),
        eps in zero_constant(8, 0.3),
        n in 1usize..=8,
    ) {
        let check = taylor_remainder_check(&x, &y, &eps, n).unwrap();
        let scale = 1.0 + check.first_order_rhs.max(check.second_order_rhs);
        prop_assert!(check.holds(1e-12 * scale), "{check:?}");
    }
}

#[test]
fn reversion_of_geometric_mixture_has_closed_form() {
    // A(z) = (1−ρ)z/(1−ρz) reverts to z/((1−ρ) + ρz)
    let rho: f64 = 0.1;
    let a = CoeffSeries::from_fn(30, |m| {
        if m == 0 {
            0.0
        } else {
            (1.0 - rho) * rho.powi(m as i32 - 1)
        }
    });
    let b = a.revert().unwrap();
    for n in 1..=30 {
        let want = (-rho).powi(n as i32 - 1) / (1.0 - rho).powi(n as i32);
        assert!((b.get(n) - want).abs() < 1e-12 * want.abs().max(1.0), "n = {n}");
    }
}

#[test]
fn remainder_check_on_identity_outer_series() {
    // x = z: the first-order bound is tight and the second-order term vanishes
    let x = CoeffSeries::identity(4);
    let y = CoeffSeries::new(vec![0.0, 0.5, 0.25, 0.0, 0.0]).unwrap();
    let eps = CoeffSeries::new(vec![0.0, 0.1, 0.0, -0.2, 0.0]).unwrap();
    for n in 1..=4 {
        let c = taylor_remainder_check(&x, &y, &eps, n).unwrap();
        assert!((c.first_order_lhs - c.first_order_rhs).abs() < 1e-15);
        assert!(c.second_order_lhs < 1e-15 && c.second_order_rhs == 0.0);
    }
}
