use eulerci::{
    admissible_segment_with, dist_to_k, hull_gap, lift_to_k, pair_direction, symmetry_apply, wave_cone_witness,
    ComplexState, SegmentOptions, StateVector,
};
use proptest::prelude::*;

fn on_sphere(raw: Vec<f64>, r: f64) -> Option<Vec<f64>> {
    let n = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    (n > 1e-3).then(|| raw.iter().map(|x| x * r.sqrt() / n).collect())
}

fn coords(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, StateVector::dim_for(d))
}

proptest! {
    #[test]
    fn lifts_lie_on_the_boundary_and_the_constraint_set(raw in prop::collection::vec(-1.0..1.0f64, 3), r in 0.1..5.0f64) {
        let Some(v) = on_sphere(raw, r) else { return Ok(()) };
        let w = lift_to_k(&v, r).unwrap();
        prop_assert!(hull_gap(&w, r).abs() < 1e-12);
        prop_assert!(dist_to_k(&w, r) < 1e-9);
        prop_assert!((w.speed_sq() - r).abs() < 1e-12);
    }

    #[test]
    fn hull_is_convex(a in prop::collection::vec(-1.0..1.0f64, 2), b in prop::collection::vec(-1.0..1.0f64, 2), t in 0.0..=1.0f64) {
        let (Some(a), Some(b)) = (on_sphere(a, 1.0), on_sphere(b, 1.0)) else { return Ok(()) };
        let w = lift_to_k(&a, 1.0).unwrap().lerp(&lift_to_k(&b, 1.0).unwrap(), t);
        prop_assert!(hull_gap(&w, 1.0) <= 1e-12);
    }

    #[test]
    fn rotations_preserve_the_gap_and_the_cone(c in coords(2), theta in -7.0..7.0f64, conj: bool) {
        let w = StateVector::from_coords(2, c).unwrap();
        let rot = symmetry_apply(&w, theta, conj).unwrap();
        prop_assert!((hull_gap(&rot, 1.0) - hull_gap(&w, 1.0)).abs() < 1e-12);
        prop_assert!((rot.norm() - w.norm()).abs() < 1e-12);
        let scale = w.norm().powi(3).max(1.0);
        let (d0, d1) = (ComplexState::from_state(&w).unwrap().cone_defect(), ComplexState::from_state(&rot).unwrap().cone_defect());
        prop_assert!((d0.abs() - d1.abs()).abs() < 1e-12 * scale);
        if !conj {
            let back = symmetry_apply(&rot, -theta, false).unwrap();
            prop_assert!(back.distance(&w) < 1e-12 * w.norm().max(1.0));
        }
    }

    #[test]
    fn pair_direction_is_the_difference_of_lifts(a in prop::collection::vec(-1.0..1.0f64, 3), b in prop::collection::vec(-1.0..1.0f64, 3), r in 0.2..3.0f64) {
        let (Some(a), Some(b)) = (on_sphere(a, r), on_sphere(b, r)) else { return Ok(()) };
        prop_assume!(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) > 1e-3);
        let dir = pair_direction(&a, &b, r).unwrap();
        let diff = lift_to_k(&a, r).unwrap().axpy(-1.0, &lift_to_k(&b, r).unwrap());
        prop_assert!(dir.distance(&diff) < 1e-12);
        prop_assert!(wave_cone_witness(&dir).unwrap().is_some());
    }

    #[test]
    fn admissible_segments_stay_in_the_hull(a in prop::collection::vec(-1.0..1.0f64, 2), b in prop::collection::vec(-1.0..1.0f64, 2), t in 0.1..0.9f64, shrink in 0.3..0.9f64) {
        let (Some(a), Some(b)) = (on_sphere(a, 1.0), on_sphere(b, 1.0)) else { return Ok(()) };
        let w = lift_to_k(&a, 1.0).unwrap().lerp(&lift_to_k(&b, 1.0).unwrap(), t).scaled(shrink);
        prop_assume!(hull_gap(&w, 1.0) < -1e-6);
        let seg = admissible_segment_with(&w, 1.0, SegmentOptions { samples: 64, lambda_only: true, ..Default::default() }).unwrap();
        let (lo, hi) = seg.endpoints(&w);
        prop_assert!(hull_gap(&lo, 1.0) <= 1e-12 && hull_gap(&hi, 1.0) <= 1e-12);
        prop_assert!(seg.half_length > 0.0);
        prop_assert!(wave_cone_witness(&seg.direction).map(|x| x.is_some()).unwrap_or(true));
    }
}
