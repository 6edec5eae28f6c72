use eulerci::rigidity::{
    boundary_direction, direction_in_cone, divcurl_defect, divcurl_sweep, g_coefficients, g_combined,
    hull_strictness_experiment, normal_form, normal_frame, random_boundary_point, SweepConfig,
};
use eulerci::spectral::Grid;
use eulerci::wave::{Domain, SubsolutionField};
use eulerci::{hull_gap, rng, symmetry_apply, ComplexState, StateVector};

fn normal_point(v: [f64; 2]) -> StateVector {
    // u = v⊗v - diag(1/2, |v|^2 - 1/2)
    StateVector::from_coords(2, vec![v[0], v[1], v[0] * v[0] - 0.5, v[0] * v[1]]).unwrap()
}

#[test]
fn normal_form_round_trip() {
    let mut g = rng::seeded(41);
    for _ in 0..1000 {
        let (w, theta, lambda) = random_boundary_point(&mut g);
        let nf = normal_form(&w).unwrap();
        assert!((nf.theta - theta).sin().abs() < 1e-9, "{} {}", nf.theta, theta);
        assert!((nf.lambda - lambda).abs() < 1e-9);
        assert!(nf.residual < 1e-10);
    }
}

#[test]
fn direction_example_and_cone_verdict() {
    let w = normal_point([0.5, 0.3]);
    let (nf, vbar) = normal_frame(&w).unwrap();
    assert!(nf.theta.abs() < 1e-12);
    let (dir, in_lambda) = boundary_direction(&nf, vbar).unwrap();
    assert!((dir.coords()[3] - 0.5).abs() < 1e-12);
    assert!(!in_lambda);
    let defect = ComplexState::from_state(&dir).unwrap().cone_defect();
    assert!((defect - 0.5).abs() < 1e-12);
    assert!(!direction_in_cone(&dir).unwrap());

    let w = normal_point([0.0, 0.7]);
    let (nf, vbar) = normal_frame(&w).unwrap();
    let (dir, in_lambda) = boundary_direction(&nf, vbar).unwrap();
    assert!(in_lambda && direction_in_cone(&dir).unwrap());
}

#[test]
fn verdict_flips_at_zero_normal_velocity() {
    for v1 in [0.0, 1e-8, -1e-8, 1e-4, 0.3] {
        let speed2: f64 = 0.49;
        let w = normal_point([v1, (speed2 - v1 * v1).sqrt()]);
        let rotated = symmetry_apply(&w, 0.7, false).unwrap();
        let (nf, vbar) = normal_frame(&rotated).unwrap();
        let (dir, in_lambda) = boundary_direction(&nf, vbar).unwrap();
        assert_eq!(in_lambda, v1 == 0.0, "v1 = {v1}");
        assert_eq!(direction_in_cone(&dir).unwrap(), in_lambda, "v1 = {v1}");
    }
}

#[test]
fn boundary_contains_only_the_direction_segment() {
    let mut g = rng::seeded(3);
    for _ in 0..200 {
        let (w, _, _) = random_boundary_point(&mut g);
        let (nf, vbar) = normal_frame(&w).unwrap();
        let (dir, _) = boundary_direction(&nf, vbar).unwrap();
        for t in [-0.01, 0.01] {
            assert!(hull_gap(&w.axpy(t, &dir), 1.0).abs() < 1e-6);
        }
        // a generic direction leaves the boundary
        let other = StateVector::from_coords(2, (0..4).map(|_| rng::normal(&mut g)).collect()).unwrap();
        let off = [-0.01, 0.01].map(|t| hull_gap(&w.axpy(t, &other), 1.0).abs()).into_iter().fold(0.0, f64::max);
        assert!(off > 1e-6, "{off}");
    }
}

#[test]
fn g_identity_on_the_boundary_line() {
    let mut g = rng::seeded(8);
    for _ in 0..100 {
        let (w, _, _) = random_boundary_point(&mut g);
        let (nf, vbar) = normal_frame(&w).unwrap();
        let wn = nf.rotate_in(&w).unwrap();
        let dir = StateVector::from_coords(2, vec![0.0, 1.0, 0.0, vbar[0]]).unwrap();
        for qbar in [-0.7, 0.0, 0.35, 1.0, 2.5] {
            let c = g_coefficients(vbar[0], vbar[1], nf.lambda, qbar);
            for i in -5..=5 {
                for j in -5..=5 {
                    let (t, s) = (0.1 * i as f64, 0.1 * j as f64);
                    let direct = g_combined(&wn.axpy(t, &dir), qbar + s, vbar[0]);
                    assert!((direct - c.eval(vbar[0], t, s)).abs() < 1e-12);
                }
            }
        }
        // the printed constant term agrees where qbar = qbar^2
        for qbar in [0.0, 1.0] {
            let printed = qbar + vbar[0] * vbar[0] * (0.5 + nf.lambda - 2.0 * qbar) - 0.25;
            assert!((g_coefficients(vbar[0], vbar[1], nf.lambda, qbar).c0 - printed).abs() < 1e-14);
        }
    }
}

#[test]
fn constant_field_has_no_defect() {
    let grid = Grid::new(2, 16);
    let w = [0.3, -0.2, 0.1, 0.4];
    let comps: Vec<Vec<f64>> = w.iter().map(|&x| vec![x; grid.len()]).collect();
    let f = SubsolutionField::new(grid, Domain::Torus, comps, vec![0.25; grid.len()], "const").unwrap();
    let mean = StateVector::from_coords(2, w.to_vec()).unwrap();
    let r = divcurl_defect(&f, &mean, 0.25).unwrap();
    assert!(r.defects[0] < 1e-15 && r.defects[1] < 1e-15);
}

#[test]
fn defects_decay_for_exact_fields_only() {
    let exact = divcurl_sweep(&SweepConfig::default()).unwrap();
    let corrupted = divcurl_sweep(&SweepConfig { corruption: Some(1e-2), ..Default::default() }).unwrap();
    for (a, b) in exact.iter().zip(&corrupted) {
        println!("{}\t|\t{}", a.tsv_row(), b.tsv_row());
    }
    for i in 1..exact.len() {
        for k in 0..2 {
            assert!(exact[i].defects[k] <= 1.1 * exact[i - 1].defects[k]);
        }
    }
    assert!(exact.last().unwrap().defects[0] < 0.25 * exact[0].defects[0]);
    let (first, last) = (corrupted[0].defects[0], corrupted.last().unwrap().defects[0]);
    assert!(last > 0.5 * first, "{first} {last}");
}

#[test]
fn witness_and_region_at_moderate_resolution() {
    let rep = hull_strictness_experiment(1.0, 41, 400, 1).unwrap();
    print!("{}", rep.to_tsv());
    assert!((rep.witness_gap + 0.14).abs() < 1e-12);
    assert!((rep.witness_f - 1.2).abs() < 1e-12);
    assert!(!rep.witness_occupied);
    assert_eq!(rep.confirmation_added, 0);
}

#[test]
fn experiment_scales_with_the_level() {
    let a = hull_strictness_experiment(1.0, 21, 100, 2).unwrap();
    let b = hull_strictness_experiment(4.0, 21, 100, 2).unwrap();
    assert_eq!(a.occupied, b.occupied);
    assert_eq!(a.region_nodes, b.region_nodes);
    assert_eq!(a.symmetric_difference, b.symmetric_difference);
    assert_eq!(a.witness_occupied, b.witness_occupied);
    assert!((a.witness_f - b.witness_f).abs() < 1e-12);
    assert!((4.0 * a.witness_gap - b.witness_gap).abs() < 1e-12);
}
