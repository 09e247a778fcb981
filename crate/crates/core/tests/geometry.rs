mod common;

use common::{gaussian_vec, gj_inverse, quad, random_spd, rng, scale_to_p, second_branch_instance};
use dyncov::dynamic_geometry::{adjusted_matrix, make_context, nonneg_condition};
use dyncov::{adjusted_quadratic_dense, nonneg_check, rank1_gap};
use proptest::prelude::*;

/// `p` values used to place `u` on either side of the singular point.
fn p_target() -> impl Strategy<Value = f64> {
    prop_oneof![0.01f64..0.95, 1.05f64..6.0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn fast_matches_dense(seed in any::<u64>(), d in 2usize..=24, p in p_target()) {
        let mut r = rng(seed);
        let cov = random_spd(&mut r, d, 0.2);
        let precision = gj_inverse(&cov);
        let u = scale_to_p(&precision, &gaussian_vec(&mut r, d), p);
        let x = gaussian_vec(&mut r, d);

        let ctx = make_context(&precision, u.clone()).unwrap();
        let fast = ctx.adjusted_quadratic(&x);
        let dense = adjusted_quadratic_dense(&cov, &u, &x).unwrap();
        let oracle = quad(&gj_inverse(&adjusted_matrix(&cov, &u)), &x);
        prop_assert!((fast - dense).abs() <= 1e-8 * (1.0 + dense.abs()), "{fast} vs {dense}");
        prop_assert!((fast - oracle).abs() <= 1e-8 * (1.0 + oracle.abs()), "{fast} vs {oracle}");
    }

    #[test]
    fn context_p_matches_solve(seed in any::<u64>(), d in 2usize..=32) {
        let mut r = rng(seed);
        let cov = random_spd(&mut r, d, 0.2);
        let precision = gj_inverse(&cov);
        let u = gaussian_vec(&mut r, d) * 0.1;
        let y = cov.clone().lu().solve(&u).unwrap();
        let expected = u.dot(&y);
        let ctx = dyncov::AdjustmentContext::compute(&precision, u);
        prop_assert!((ctx.p() - expected).abs() <= 1e-10 * (1.0 + expected.abs()));
    }

    #[test]
    fn rank1_gap_is_squared_projection(seed in any::<u64>(), d in prop::sample::select(vec![2usize, 8, 32])) {
        let mut r = rng(seed);
        let cov = random_spd(&mut r, d, 0.1);
        let f = gaussian_vec(&mut r, d);
        let v = gaussian_vec(&mut r, d);
        let gap = rank1_gap(&cov, &f, &v);
        let expected = v.dot(&f).powi(2);
        let scale = quad(&cov, &v).abs().max(expected).max(f64::MIN_POSITIVE);
        prop_assert!((gap - expected).abs() <= 1e-10 * scale);
    }

    #[test]
    fn contraction_along_u(seed in any::<u64>(), d in 2usize..=16, p in 0.01f64..0.95, t in -3.0f64..3.0) {
        prop_assume!(t.abs() > 1e-3);
        let mut r = rng(seed);
        let cov = random_spd(&mut r, d, 0.2);
        let precision = gj_inverse(&cov);
        let u = scale_to_p(&precision, &gaussian_vec(&mut r, d), p);
        let x = &u * t;
        let ctx = make_context(&precision, u).unwrap();
        prop_assert!(ctx.adjusted_quadratic(&x) > quad(&precision, &x));
    }

    #[test]
    fn nonneg_below_one(seed in any::<u64>(), d in 2usize..=16, p in 0.0f64..0.99) {
        let mut r = rng(seed);
        let cov = random_spd(&mut r, d, 0.2);
        let precision = gj_inverse(&cov);
        let u = scale_to_p(&precision, &gaussian_vec(&mut r, d), p.max(1e-6));
        let anchor = gaussian_vec(&mut r, d) * 0.3;
        let check = nonneg_check(&precision, &u, &anchor).unwrap();
        prop_assert!(check.condition_holds);
        prop_assert!(check.value >= -1e-10, "{check:?}");
        prop_assert!(check.quadratic_nonneg);
    }

    #[test]
    fn nonneg_above_one_when_condition_holds(seed in any::<u64>(), d in 2usize..=16, p in 1.05f64..5.0, s in -3.0f64..5.0, slack in 0.0f64..2.0) {
        let mut r = rng(seed);
        let cov = random_spd(&mut r, d, 0.2);
        let precision = gj_inverse(&cov);
        let (u, anchor) = second_branch_instance(&mut r, &precision, p, s, slack);
        let check = nonneg_check(&precision, &u, &anchor).unwrap();
        prop_assert!(check.condition_holds, "{check:?}");
        prop_assert!(check.value >= -1e-10, "{check:?}");
    }
}

#[test]
fn condition_table() {
    assert!(nonneg_condition(0.5, 0.0, 0.0));
    assert!(!nonneg_condition(1.0, 10.0, 1.0));
    assert!(nonneg_condition(2.0, 2.0, 1.0));
    assert!(!nonneg_condition(2.0, 2.0, 3.0));
}

#[test]
fn second_branch_construction_hits_the_boundary() {
    let mut r = rng(11);
    let cov = random_spd(&mut r, 6, 0.2);
    let precision = gj_inverse(&cov);
    let (u, anchor) = second_branch_instance(&mut r, &precision, 2.0, 3.0, 0.0);
    let check = nonneg_check(&precision, &u, &anchor).unwrap();
    assert!((check.p - 2.0).abs() < 1e-9);
    assert!((check.s - 3.0).abs() < 1e-9);
    assert!((check.q - 5.0).abs() < 1e-9);
    // (p-1)(q-1) = (s-1)^2 puts the quadratic at zero
    assert!(check.value.abs() < 1e-9);
}
