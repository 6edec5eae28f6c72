use eulerci::laminate::{certify_by_rotation, in_closure, read_lam1, write_lam1};
use eulerci::{decompose_ur, decompose_vr, f_r_eval, hull_gap, measure_stats, symmetry_apply, SlicePoint, StateVector};
use proptest::prelude::*;

/// Points of the closed slice region at level r.
fn region_point() -> impl Strategy<Value = (SlicePoint, f64)> {
    (-1.0..=1.0f64, -1.0..=1.0f64, -0.5..=0.5f64, 0.2..4.0f64).prop_filter_map("outside the region", |(a, b, c, r)| {
        let q = r.sqrt();
        let p = SlicePoint::new(q * a, q * b, r * c);
        in_closure(p, r).then_some((p, r))
    })
}

fn check_on_constraint_set(w: &StateVector, r: f64) -> bool {
    let c = w.coords();
    (c[0] * c[0] + c[1] * c[1] - r).abs() < 1e-10 * r && hull_gap(w, r).abs() < 1e-10 * r
}

proptest! {
    #[test]
    fn slice_laminates_reproduce_their_point((p, r) in region_point()) {
        let lam = decompose_vr(p, r).unwrap();
        prop_assert!(lam.order() <= 4);
        prop_assert!((lam.total_weight() - 1.0).abs() < 1e-12);
        let (mean, var) = measure_stats(&lam, &p.embed());
        prop_assert!(mean.distance(&p.embed()) < 1e-12 * r.max(1.0));
        prop_assert!(var >= 0.0);
        for a in lam.atoms() {
            prop_assert!(a.weight >= 0.0);
            prop_assert!(check_on_constraint_set(&a.state, r));
            prop_assert_eq!(a.state.coords()[3], 0.0);
        }
    }

    #[test]
    fn lam1_round_trip_is_exact((p, r) in region_point()) {
        let lam = decompose_vr(p, r).unwrap();
        let back = read_lam1(&write_lam1(&lam)).unwrap();
        prop_assert_eq!(back, lam);
    }

    #[test]
    fn rotated_states_decompose_below_the_level((p, r) in region_point(), shrink in 0.2..0.95f64, theta in -3.2..3.2f64, eps in 0.01..0.1f64) {
        let p = SlicePoint::new(shrink * p.a, shrink * p.b, shrink * p.c);
        prop_assume!(f_r_eval(p, r).is_ok_and(|f| f < 1.0));
        let w = symmetry_apply(&p.embed(), theta, false).unwrap();
        let cert = certify_by_rotation(&w, r).expect("an interior rotated slice point is certified");
        let (level, lam) = decompose_ur(&cert, r, eps * r).unwrap();
        let level = level.value();
        prop_assert!(level < r && level > r - eps * r);
        prop_assert!(lam.root().distance(&w) < 1e-9 * w.norm().max(1.0));
        let mut bary = StateVector::zeros(2);
        for a in lam.atoms() {
            prop_assert!(check_on_constraint_set(&a.state, level));
            bary = bary.axpy(a.weight, &a.state);
        }
        prop_assert!(bary.distance(&w) < 1e-9 * w.norm().max(1.0));
    }
}

#[test]
fn split_keeps_the_barycenter() {
    let lam = decompose_vr(SlicePoint::new(0.2, 0.1, 0.05), 1.0).unwrap();
    let before = measure_stats(&lam, lam.root()).0;
    // split the heaviest atom along its own segment to the origin and back
    let idx = (0..lam.atoms().len()).max_by(|&i, &j| lam.atoms()[i].weight.total_cmp(&lam.atoms()[j].weight)).unwrap();
    let a = lam.atoms()[idx].state.clone();
    let split = lam.split_atom(idx, &a.scaled(1.5), &a.scaled(0.5)).unwrap();
    let after = measure_stats(&split, split.root()).0;
    assert!(before.distance(&after) < 1e-12);
    assert!((split.total_weight() - 1.0).abs() < 1e-12);
}
