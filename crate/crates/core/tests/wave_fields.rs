use std::sync::Arc;
use std::time::Instant;

use eulerci::laminate::decompose_vr;
use eulerci::spectral::Grid;
use eulerci::wave::{
    apply_potential, laminate_field, make_potential, pressure_from_u, two_state_at, two_state_field, BoxCutoff,
    CutoffSinusoid, LaminateFieldOptions, PlaneWave, Sampling, TwoStateSpec, ZeroPotential,
};
use eulerci::{hull_gap, SlicePoint, StateVector};

fn kpair_spec(eps: f64) -> TwoStateSpec {
    // (1,0,1/2) and (-1,0,1/2) re-centred at their barycenter (0,0,1/2)
    let w1 = SlicePoint::new(1.0, 0.0, 0.0).embed();
    let w2 = SlicePoint::new(-1.0, 0.0, 0.0).embed();
    TwoStateSpec::new(w1, w2, 0.5, eps).unwrap()
}

#[test]
fn two_state_kpair_meets_both_tolerances() {
    let t = Instant::now();
    let spec = kpair_spec(0.05);
    let built = two_state_field(&spec).unwrap();
    let last = built.last().unwrap();
    for s in &built.history {
        println!("osc {:>6} frac {:?} err {:.4} dev {:.4}", s.oscillations, s.fractions, s.fraction_error, s.max_deviation);
    }
    assert!(last.fraction_error < 0.05 && last.max_deviation < 0.05);
    let (dv, dm) = built.field.weak_residuals();
    assert!(dv < 1e-8 && dm < 1e-8, "{dv} {dm}");
    println!("elapsed {:?}", t.elapsed());
}

#[test]
fn two_state_tight_tolerance() {
    let spec = kpair_spec(0.02);
    let built = two_state_field(&spec).unwrap();
    let last = built.last().unwrap();
    println!("eps 0.02: osc {} err {:.4} dev {:.4}", last.oscillations, last.fraction_error, last.max_deviation);
    assert!(last.fraction_error < 0.02 && last.max_deviation < 0.02);
}

#[test]
fn two_state_fraction_error_decreases_with_frequency() {
    let spec = kpair_spec(0.05);
    let sampling = Sampling { random: 200_000, lattice: 0, seed: 9 };
    let mut prev = f64::INFINITY;
    for k in 0..6 {
        let n = spec.oscillations * 2f64.powi(k);
        let (_, s) = two_state_at(&spec, n, &sampling).unwrap();
        println!("osc {n} err {:.5} dev {:.5}", s.fraction_error, s.max_deviation);
        assert!(s.fraction_error <= 1.1 * prev);
        prev = s.fraction_error;
    }
}

#[test]
fn quarter_laminate_field() {
    let t = Instant::now();
    let lam = decompose_vr(SlicePoint::new(0.0, 0.0, 0.0), 1.0).unwrap();
    let eps = 0.1;
    let built = laminate_field(&lam, eps, lam.root(), &LaminateFieldOptions::default()).unwrap();
    for s in &built.history {
        println!("periods {} frac {:?} dev {:.4}", s.oscillations, s.fractions, s.max_deviation);
    }
    let last = built.last().unwrap();
    assert_eq!(last.fractions.len(), 4);
    for (f, a) in last.fractions.iter().zip(lam.atoms()) {
        assert!((f - 0.25).abs() < eps);
        assert!(hull_gap(&a.state, 1.0).abs() < 1e-12);
    }
    let (dv, dm) = built.field.weak_residuals();
    assert!(dv < 1e-8 && dm < 1e-8);
    println!("elapsed {:?}", t.elapsed());
}

#[test]
fn cutoff_sinusoid_residuals_and_closed_form() {
    let w = SlicePoint::new(1.0, 0.0, 0.5).embed();
    let desc = make_potential(&w).unwrap();
    let eta = desc.eta().to_vec();
    let n = 128;
    for cycles in [4.0, 8.0] {
        let phi = CutoffSinusoid { cutoff: BoxCutoff::unit_cube(2, 0.125), wave: PlaneWave::along(&eta, cycles, 0.0) };
        let f = apply_potential(&desc, Arc::new(phi.clone()), n).unwrap();
        let (dv, dm) = f.weak_residuals();
        assert!(dv < 1e-8 * f.l2_norm().max(1.0) && dm < 1e-8 * f.l2_norm().max(1.0));
        // sup distance to -chi sin(...) w
        let grid = Grid::new(2, n);
        let mut dev = 0.0f64;
        for idx in 0..grid.len() {
            let x = grid.point(idx);
            let (st, _) = f.evaluate(&x).unwrap();
            let chi = phi.cutoff.eval(&x).0;
            let arg: f64 = phi.wave.wavevector.iter().zip(&x).map(|(k, y)| k * y).sum();
            dev = dev.max(st.distance(&w.scaled(-chi * arg.sin())));
        }
        println!("cycles {cycles}: sup deviation {dev:.4}");
    }
}

#[test]
fn zero_potential_gives_zero_field() {
    let w = SlicePoint::new(1.0, 0.0, 0.5).embed();
    let desc = make_potential(&w).unwrap();
    let f = apply_potential(&desc, Arc::new(ZeroPotential(2)), 16).unwrap();
    assert!(f.components().iter().flatten().all(|&x| x == 0.0));
}

#[test]
fn plane_wave_pressure_matches_airy_trace() {
    let w = eulerci::symmetry_apply(&SlicePoint::new(0.0, 0.0, 0.4).embed(), 0.0, false).unwrap();
    let desc = make_potential(&w).unwrap();
    let phi = PlaneWave::along(desc.eta(), 3.0, 0.2);
    let f = apply_potential(&desc, Arc::new(phi), 64).unwrap();
    let q = pressure_from_u(&f);
    let err = q.iter().zip(f.pressure()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-10 * f.sup_norm().max(1.0), "{err}");
    let _ = StateVector::zeros(2);
}

