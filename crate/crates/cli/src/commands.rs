use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context as _};
use eulerci::laminate::{certify_by_rotation, in_closure, read_lam1, write_lam1};
use eulerci::rigidity::{
    boundary_direction, direction_in_cone, divcurl_sweep, g_coefficients, g_combined, hull_strictness_with_grid,
    normal_form, normal_frame, random_boundary_point, SweepConfig,
};
use eulerci::staircase::{catalog_flow, energy_from_field_id, field_profile_id, run, EnergyProfile, Schedule, StageConfig};
use eulerci::wave::{laminate_field, read_fld1, write_csv, write_fld1, LaminateFieldOptions, SubsolutionField};
use eulerci::{decompose_ur, decompose_vr, hull_gap, rng, Laminate, SlicePoint, StateVector};
use rayon::prelude::*;

use crate::config::{config_error, parse_list, write_out, BuildArgs, HullArgs, IntegrateArgs, LaminateArgs, RigidityArgs, VerifyArgs};

/// Flag `flag` of subcommand `sub` is required.
pub struct Missing(pub &'static str, pub &'static str);

pub type Outcome = anyhow::Result<()>;

fn emit(out: Option<&Path>, name: &str, text: &str) -> Outcome {
    match out {
        Some(dir) => write_out(&dir.join(name), text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn hull(a: HullArgs) -> anyhow::Result<Result<(), Missing>> {
    let Some(r) = a.r else { return Ok(Err(Missing("hull", "--r"))) };
    let res = a.res.unwrap_or(81);
    if res < 2 {
        return Err(config_error("--res must be at least 2"));
    }
    let (report, grid) = hull_strictness_with_grid(r, res, a.boundary_samples.unwrap_or(2000), a.seed.unwrap_or(0))?;
    let tsv = report.to_tsv();
    emit(a.out.as_deref(), "report.tsv", &tsv)?;
    if let Some(dir) = &a.out {
        write_out(&dir.join("occupancy.fld1"), &grid.to_fld1_scalar(&format!("lc-hull:r={r}")))?;
        // the planes of the coverage check plus c = 0, for slice plots
        let mut planes: Vec<usize> = (1..=10).map(|m| m * (res - 1) / 11).collect();
        planes.push((res - 1) / 2);
        planes.sort_unstable();
        planes.dedup();
        let mut s = String::from("a\tb\tc\toccupied\tin_region\n");
        for k in planes {
            for i in 0..res {
                for j in 0..res {
                    let p = grid.node(i, j, k);
                    let _ = writeln!(s, "{:.6}\t{:.6}\t{:.6}\t{}\t{}", p.a, p.b, p.c, grid.occupied(i, j, k) as u8, in_closure(p, r) as u8);
                }
            }
        }
        write_out(&dir.join("slices.tsv"), s.as_bytes())?;
    }
    Ok(Ok(()))
}

fn planar_state(s: &str) -> anyhow::Result<StateVector> {
    Ok(StateVector::from_coords(2, parse_list(s, 4, "--state")?)?)
}

fn slice_point(s: &str) -> anyhow::Result<SlicePoint> {
    let p = parse_list(s, 3, "--point")?;
    Ok(SlicePoint::new(p[0], p[1], p[2]))
}

fn laminate_from(point: Option<&str>, state: Option<&str>, r: f64, eps: f64) -> anyhow::Result<Laminate> {
    match (point, state) {
        (Some(p), None) => Ok(decompose_vr(slice_point(p)?, r)?),
        (None, Some(s)) => {
            let w = planar_state(s)?;
            let cert = certify_by_rotation(&w, r).ok_or_else(|| anyhow::anyhow!("state {s} has no decomposition certificate below level {r}"))?;
            Ok(decompose_ur(&cert, r, eps)?.1)
        }
        (Some(_), Some(_)) => Err(config_error("give either --point or --state, not both")),
        (None, None) => Err(config_error("one of --point or --state is required")),
    }
}

pub fn laminate(a: LaminateArgs) -> anyhow::Result<Result<(), Missing>> {
    let Some(r) = a.r else { return Ok(Err(Missing("laminate", "--r"))) };
    let lam = laminate_from(a.point.as_deref(), a.state.as_deref(), r, a.eps.unwrap_or(0.05))?;
    let text = write_lam1(&lam);
    match &a.out {
        Some(p) => write_out(p, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(Ok(()))
}

pub fn build(a: BuildArgs) -> anyhow::Result<Result<(), Missing>> {
    let Some(out) = a.out.clone() else { return Ok(Err(Missing("build", "--out"))) };
    let eps = a.eps.unwrap_or(0.05);
    let lam = match (&a.laminate, &a.point) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path).map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
            read_lam1(&text)?
        }
        (None, Some(p)) => {
            let Some(r) = a.r else { return Ok(Err(Missing("build", "--r"))) };
            decompose_vr(slice_point(p)?, r)?
        }
        _ => return Err(config_error("give exactly one of --laminate or --point")),
    };
    let opts = LaminateFieldOptions { periods: a.periods.unwrap_or(4.0), n: a.n.unwrap_or(128), ..Default::default() };
    let built = laminate_field(&lam, eps, &lam.root().clone(), &opts)?;
    let (div, mom) = built.field.weak_residuals();
    if div.max(mom) >= 1e-8 {
        bail!("invariant violated: weak residuals ({div:e}, {mom:e}) of the built field exceed 1e-8");
    }
    let mut s = String::from("periods\tfraction_error\tmax_deviation\n");
    for step in &built.history {
        let _ = writeln!(s, "{}\t{:.6e}\t{:.6e}", step.oscillations, step.fraction_error, step.max_deviation);
    }
    let _ = writeln!(s, "# div_residual {div:.3e} mom_residual {mom:.3e}");
    print!("{s}");
    write_out(&out, &write_fld1(&built.field))?;
    if let Some(csv) = &a.csv {
        write_out(csv, write_csv(&built.field).as_bytes())?;
    }
    Ok(Ok(()))
}

/// Entry `k` of a per-stage list; the last entry repeats.
fn nth<T: Copy>(list: &[T], k: usize) -> T {
    list[k.min(list.len() - 1)]
}

pub fn schedule_from(a: &IntegrateArgs) -> anyhow::Result<Schedule> {
    let stages = a.stages.unwrap_or(3);
    if stages == 0 {
        return Err(config_error("--stages must be positive"));
    }
    let reference = Schedule::reference();
    let cells = a.cells.clone().unwrap_or_else(|| vec![1]);
    let levels = a.levels.clone().unwrap_or_else(|| reference.stages.iter().map(|s| s.level).collect());
    let eps = a.epsilons.clone().unwrap_or_else(|| (0..stages).map(|k| 0.05 / 2f64.powi(k as i32)).collect());
    let periods = a.periods.clone().unwrap_or_else(|| StageConfig::default().periods);
    if cells.is_empty() || levels.is_empty() || eps.is_empty() || periods.is_empty() {
        return Err(config_error("per-stage lists must not be empty"));
    }
    let base = StageConfig::default();
    let cfgs = (0..stages)
        .map(|k| StageConfig {
            cells: nth(&cells, k),
            eps: nth(&eps, k),
            level: nth(&levels, k),
            periods: periods.clone(),
            margin: a.cutoff.unwrap_or(base.margin),
            floor: a.floor.unwrap_or(base.floor),
            tol: a.tol.unwrap_or(base.tol),
            ..base.clone()
        })
        .collect();
    Ok(Schedule {
        n: a.n.unwrap_or(reference.n),
        stages: cfgs,
        sigma: a.sigma.unwrap_or(reference.sigma),
        seed: a.seed.unwrap_or(reference.seed),
        margin: a.margin.unwrap_or(reference.margin),
    })
}

pub fn integrate(a: IntegrateArgs) -> Outcome {
    let flow = catalog_flow(a.flow.as_deref().unwrap_or("zero"), &a.param).map_err(|e| config_error(e.to_string()))?;
    let profile = EnergyProfile::parse(a.profile.as_deref().unwrap_or("const:1")).map_err(|e| config_error(e.to_string()))?;
    let schedule = schedule_from(&a)?;
    schedule.check().map_err(|e| config_error(e.to_string()))?;
    let report = run(&flow, &profile, &schedule)?;
    match &a.out {
        Some(p) => write_out(p, report.to_tsv().as_bytes())?,
        None => print!("{}", report.to_tsv()),
    }
    eprint!("{}", report.summary());
    if let Some(p) = &a.field {
        let field = report.final_iterate.field.clone().with_profile(&field_profile_id(&flow, &profile));
        write_out(p, &write_fld1(&field))?;
    }
    Ok(())
}

/// Outcome of one invariant check on a field.
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub bound: f64,
}

impl Check {
    pub fn ok(&self) -> bool {
        self.value <= self.bound
    }
}

/// All invariants of a field file: finite data, weak residuals, and for
/// iterate fields the pointwise hull condition at the recorded profile.
pub fn field_checks(f: &SubsolutionField, residual_tol: f64, gap_tol: f64) -> anyhow::Result<Vec<Check>> {
    let bad = f.components().iter().chain(std::iter::once(&f.pressure().to_vec())).flatten().filter(|x| !x.is_finite()).count();
    let mut checks = vec![Check { name: "finite values", value: bad as f64, bound: 0.0 }];
    if bad > 0 {
        return Ok(checks);
    }
    let (div, mom) = f.weak_residuals();
    checks.push(Check { name: "divergence residual", value: div, bound: residual_tol });
    checks.push(Check { name: "momentum residual", value: mom, bound: residual_tol });
    if let Some(e) = energy_from_field_id(f.profile(), f.grid())? {
        let gap = (0..f.grid().len()).into_par_iter().map(|i| hull_gap(&f.state_at(i), e[i])).reduce(|| f64::NEG_INFINITY, f64::max);
        checks.push(Check { name: "hull gap", value: gap, bound: gap_tol });
    }
    Ok(checks)
}

pub fn verify(a: VerifyArgs) -> anyhow::Result<Result<(), Missing>> {
    let Some(path) = a.file else { return Ok(Err(Missing("verify", "FILE"))) };
    let bytes = std::fs::read(&path).map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
    let field = read_fld1(&bytes).with_context(|| format!("invariant violated: {} is not a valid FLD1 file", path.display()))?;
    let checks = field_checks(&field, a.residual_tol.unwrap_or(1e-8), a.gap_tol.unwrap_or(1e-9))?;
    for c in &checks {
        println!("{}\t{}\t{:.3e}\t<= {:.1e}", if c.ok() { "ok" } else { "FAIL" }, c.name, c.value, c.bound);
    }
    if let Some(c) = checks.iter().find(|c| !c.ok()) {
        bail!("invariant violated: {} = {:e} exceeds {:e}", c.name, c.value, c.bound);
    }
    Ok(Ok(()))
}

pub fn rigidity(a: RigidityArgs) -> Outcome {
    let samples = a.samples.unwrap_or(1000);
    let mut g = rng::seeded(a.seed.unwrap_or(0));
    let (mut theta_err, mut lambda_err) = (0.0f64, 0.0f64);
    let mut verdict_mismatch = 0usize;
    for _ in 0..samples {
        let (w, theta, lambda) = random_boundary_point(&mut g);
        let nf = normal_form(&w)?;
        theta_err = theta_err.max((nf.theta - theta).sin().abs());
        lambda_err = lambda_err.max((nf.lambda - lambda).abs());
        let (nf, vbar) = normal_frame(&w)?;
        let (dir, in_lambda) = boundary_direction(&nf, vbar)?;
        verdict_mismatch += (direction_in_cone(&dir)? != in_lambda) as usize;
    }
    let mut s = String::from("key\tvalue\n");
    let _ = writeln!(s, "normal_form_samples\t{samples}");
    let _ = writeln!(s, "normal_form_theta_error\t{theta_err:.3e}");
    let _ = writeln!(s, "normal_form_lambda_error\t{lambda_err:.3e}");
    let _ = writeln!(s, "direction_verdict_mismatches\t{verdict_mismatch}");

    let (v1, v2) = (a.v1.unwrap_or(0.5), a.v2.unwrap_or(0.3));
    let qbar = a.qbar.unwrap_or(0.0);
    // u is trace-free, so the second normal-form eigenvalue is |v|^2 - 1/2
    let lambda = v1 * v1 + v2 * v2 - 0.5;
    if !(lambda < 0.5) {
        return Err(config_error("normal-frame velocity needs |v|^2 < 1"));
    }
    let c = g_coefficients(v1, v2, lambda, qbar);
    // (v, v⊗v - diag(1/2, lambda)) in the normal frame, moved along the boundary line
    let wn = StateVector::from_coords(2, vec![v1, v2, v1 * v1 - 0.5, v1 * v2])?;
    let dir = StateVector::from_coords(2, vec![0.0, 1.0, 0.0, v1])?;
    let mut identity_err = 0.0f64;
    for i in -5..=5 {
        for j in -5..=5 {
            let (t, sv) = (0.1 * i as f64, 0.1 * j as f64);
            identity_err = identity_err.max((g_combined(&wn.axpy(t, &dir), qbar + sv, v1) - c.eval(v1, t, sv)).abs());
        }
    }
    let _ = writeln!(s, "g_c0\t{:.12}", c.c0);
    let _ = writeln!(s, "g_c1\t{:.12}", c.c1);
    let _ = writeln!(s, "g_c2\t{:.12}", c.c2);
    let _ = writeln!(s, "g_strictly_convex\t{}", c.strictly_convex);
    let _ = writeln!(s, "g_identity_error\t{identity_err:.3e}");
    emit(a.out.as_deref(), "rigidity.tsv", &s)?;

    let base = SweepConfig::default();
    let cfg = SweepConfig { n: a.n.unwrap_or(base.n), frequencies: a.frequencies.clone().unwrap_or(base.frequencies.clone()), ..base };
    let exact = divcurl_sweep(&cfg)?;
    let corrupted = divcurl_sweep(&SweepConfig { corruption: Some(a.corruption.unwrap_or(1e-2)), ..cfg })?;
    let mut t = String::new();
    let _ = writeln!(t, "field\t{}", eulerci::rigidity::DivCurlReport::tsv_header());
    for r in &exact {
        let _ = writeln!(t, "exact\t{}", r.tsv_row());
    }
    for r in &corrupted {
        let _ = writeln!(t, "corrupted\t{}", r.tsv_row());
    }
    emit(a.out.as_deref(), "divcurl.tsv", &t)
}
