//! Quick invariant suites behind `--selftest`, one per subcommand.

use anyhow::bail;
use eulerci::laminate::{read_lam1, write_lam1};
use eulerci::rigidity::{
    boundary_direction, direction_in_cone, divcurl_sweep, hull_strictness_experiment, normal_form, normal_frame,
    random_boundary_point, SweepConfig,
};
use eulerci::staircase::{catalog_flow, init_subsolution, stage, EnergyProfile, StageConfig};
use eulerci::wave::{laminate_field, read_fld1, write_fld1, LaminateFieldOptions};
use eulerci::{decompose_vr, hull_gap, rng, SlicePoint};

use crate::commands::field_checks;

type Checks = Vec<(&'static str, bool, String)>;

fn hull() -> anyhow::Result<Checks> {
    let rep = hull_strictness_experiment(1.0, 21, 200, 0)?;
    let again = hull_strictness_experiment(1.0, 21, 200, 0)?;
    Ok(vec![
        ("witness gap", (rep.witness_gap + 0.14).abs() < 1e-12, format!("{:.12}", rep.witness_gap)),
        ("witness f", (rep.witness_f - 1.2).abs() < 1e-12, format!("{:.12}", rep.witness_f)),
        ("witness unoccupied", !rep.witness_occupied, String::new()),
        ("fixed point reached", rep.converged && rep.confirmation_added == 0, format!("{} rounds", rep.rounds)),
        ("repeatable", rep == again, String::new()),
    ])
}

fn laminate() -> anyhow::Result<Checks> {
    let centre = decompose_vr(SlicePoint::new(0.0, 0.0, 0.0), 1.0)?;
    let vertex = decompose_vr(SlicePoint::new(1.0, 0.0, 0.5), 1.0)?;
    let edge = decompose_vr(SlicePoint::new(0.75, 0.0, 0.25), 1.0)?;
    let mut w: Vec<f64> = edge.atoms().iter().map(|a| a.weight).collect();
    w.sort_by(|a, b| b.total_cmp(a));
    let back = read_lam1(&write_lam1(&centre))?;
    Ok(vec![
        ("centre quarter weights", centre.atoms().len() == 4 && centre.atoms().iter().all(|a| (a.weight - 0.25).abs() < 1e-12), String::new()),
        ("vertex is a Dirac mass", vertex.atoms().len() == 1, String::new()),
        (
            "edge point weights",
            w.len() == 3 && (w[0] - 0.75).abs() < 1e-12 && (w[1] - 0.125).abs() < 1e-12 && (w[2] - 0.125).abs() < 1e-12,
            format!("{w:?}"),
        ),
        ("atoms on the constraint set", centre.atoms().iter().all(|a| hull_gap(&a.state, 1.0).abs() < 1e-12), String::new()),
        ("LAM1 round trip", back == centre, String::new()),
    ])
}

fn build() -> anyhow::Result<Checks> {
    let lam = decompose_vr(SlicePoint::new(0.0, 0.0, 0.0), 1.0)?;
    let built = laminate_field(&lam, 0.1, &lam.root().clone(), &LaminateFieldOptions { n: 64, ..Default::default() })?;
    let (div, mom) = built.field.weak_residuals();
    let bytes = write_fld1(&built.field);
    let back = read_fld1(&bytes)?;
    Ok(vec![
        ("weak residuals", div.max(mom) < 1e-8, format!("{div:.2e} {mom:.2e}")),
        ("FLD1 round trip", write_fld1(&back) == bytes, String::new()),
    ])
}

fn integrate() -> anyhow::Result<Checks> {
    let flow = catalog_flow("zero", &[("d".into(), 2.0)])?;
    let it = init_subsolution(&flow, &EnergyProfile::Const(1.0), 32, 1e-3, 1)?;
    let next = stage(&it, &StageConfig { level: 0.9, ..Default::default() })?;
    let rec = next.history.last().expect("stage record");
    Ok(vec![
        ("defect decreases", rec.defect < it.defect(), format!("{:.4} -> {:.4}", it.defect(), rec.defect)),
        ("inside the hull", rec.max_hull_gap <= 0.0, format!("{:.2e}", rec.max_hull_gap)),
        ("residuals", rec.div_residual.max(rec.mom_residual) < 1e-9, format!("{:.2e}", rec.div_residual.max(rec.mom_residual))),
    ])
}

fn verify() -> anyhow::Result<Checks> {
    let flow = catalog_flow("shear2d", &[("amp".into(), 0.5)])?;
    let it = init_subsolution(&flow, &EnergyProfile::ConstPlusFlow(0.5), 32, 1e-3, 1)?;
    let clean = field_checks(&it.field, 1e-8, 1e-9)?;
    // a compressive bump in v1 breaks div v = 0
    let mut bad = it.field.clone();
    let grid = bad.grid();
    for (i, x) in bad.components_mut()[0].iter_mut().enumerate() {
        *x += 1e-2 * (std::f64::consts::TAU * grid.point(i)[0]).sin();
    }
    let broken = field_checks(&bad, 1e-8, 1e-9)?;
    let failed: Vec<&str> = broken.iter().filter(|c| !c.ok()).map(|c| c.name).collect();
    Ok(vec![
        ("clean field passes", clean.iter().all(|c| c.ok()) && clean.len() == 4, String::new()),
        ("corrupted field fails", failed.contains(&"divergence residual"), failed.join(", ")),
    ])
}

fn rigidity() -> anyhow::Result<Checks> {
    let mut g = rng::seeded(5);
    let mut worst = 0.0f64;
    let mut mismatch = 0;
    for _ in 0..200 {
        let (w, theta, lambda) = random_boundary_point(&mut g);
        let nf = normal_form(&w)?;
        worst = worst.max((nf.theta - theta).sin().abs()).max((nf.lambda - lambda).abs());
        let (nf, vbar) = normal_frame(&w)?;
        let (dir, in_lambda) = boundary_direction(&nf, vbar)?;
        mismatch += (direction_in_cone(&dir)? != in_lambda) as usize;
    }
    let cfg = SweepConfig { n: 128, frequencies: vec![4.0, 16.0], ..Default::default() };
    let exact = divcurl_sweep(&cfg)?;
    Ok(vec![
        ("normal form round trip", worst < 1e-9, format!("{worst:.2e}")),
        ("direction verdicts", mismatch == 0, format!("{mismatch} mismatches")),
        ("defects decay", exact[1].defects[0] < exact[0].defects[0], format!("{:.2e} -> {:.2e}", exact[0].defects[0], exact[1].defects[0])),
    ])
}

pub fn run(name: &str) -> anyhow::Result<()> {
    let checks = match name {
        "hull" => hull()?,
        "laminate" => laminate()?,
        "build" => build()?,
        "integrate" => integrate()?,
        "verify" => verify()?,
        _ => rigidity()?,
    };
    for (what, ok, detail) in &checks {
        println!("{}\t{name}: {what}\t{detail}", if *ok { "PASS" } else { "FAIL" });
    }
    let failed = checks.iter().filter(|c| !c.1).count();
    if failed > 0 {
        bail!("invariant violated: {failed} selftest check(s) failed");
    }
    Ok(())
}
