//! Planar rigidity experiments at the boundary of the convex hull: normal
//! forms, the boundary line direction, the quadratic functional that is
//! strictly convex along that line, commutativity defects of fields and the
//! comparison of the lamination hull grid with the closed slice region.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::laminate::{f_r_eval, in_closure, lc_hull_slice, HullGridSpec, Laminate, OccupancyGrid};
use crate::rng;
use crate::spectral::det_sum;
use crate::state::{dist_to_k, hull_gap, symmetry_apply, wave_cone_witness, SlicePoint, StateVector};
use crate::wave::{field_from, Domain, RealizeOptions, Realization, Scale, Slab, SubsolutionField};

/// Rotation bringing v⊗v - u to diag(1/2, lambda) at level 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalForm {
    /// Applying `symmetry_apply(w, theta, false)` gives the normal frame.
    pub theta: f64,
    pub lambda: f64,
    /// Max-entry distance of the rotated matrix to diag(1/2, lambda).
    pub residual: f64,
}

impl NormalForm {
    /// `w` expressed in the normal frame.
    pub fn rotate_in(&self, w: &StateVector) -> Result<StateVector> {
        symmetry_apply(w, self.theta, false)
    }

    /// A normal-frame state expressed back in the original frame.
    pub fn rotate_out(&self, w: &StateVector) -> Result<StateVector> {
        symmetry_apply(w, -self.theta, false)
    }
}

/// v⊗v - u as (m11, m12, m22).
fn reduced_matrix(w: &StateVector) -> (f64, f64, f64) {
    let v = w.v();
    let u = w.u_matrix();
    (v[0] * v[0] - u[0], v[0] * v[1] - u[1], v[1] * v[1] - u[3])
}

pub fn normal_form(w: &StateVector) -> Result<NormalForm> {
    if w.d() != 2 {
        return Err(Error::DimensionError("normal form needs d = 2".into()));
    }
    let gap = hull_gap(w, 1.0);
    if gap.abs() > 1e-8 {
        return Err(Error::NotOnBoundary { gap });
    }
    if dist_to_k(w, 1.0) <= 1e-6 {
        return Err(Error::OnConstraintSet);
    }
    let (p, s, t) = reduced_matrix(w);
    // principal axis of the larger eigenvalue
    let phi = 0.5 * (2.0 * s).atan2(p - t);
    let theta = -phi;
    let rotated = symmetry_apply(w, theta, false)?;
    let (rp, rs, rt) = reduced_matrix(&rotated);
    let residual = (rp - 0.5).abs().max(rs.abs());
    let lambda = rt;
    if lambda >= 0.5 - 1e-8 {
        return Err(Error::OnConstraintSet);
    }
    Ok(NormalForm { theta, lambda, residual })
}

/// The direction of the boundary line through a normal-form point, in the
/// original frame, and whether it lies in the wave cone (only when the
/// normal-frame velocity has v1 = 0).
pub fn boundary_direction(nf: &NormalForm, vbar: [f64; 2]) -> Result<(StateVector, bool)> {
    // rounding noise in v1 would leave a tiny stress part whose cone test is
    // relative to its own size, so a vanishing v1 is snapped to zero
    let in_cone = vbar[0].abs() <= 1e-10;
    let dir = StateVector::from_coords(2, vec![0.0, 1.0, 0.0, if in_cone { 0.0 } else { vbar[0] }])?;
    Ok((nf.rotate_out(&dir)?, in_cone))
}

/// Normal form of `w` together with its normal-frame velocity.
pub fn normal_frame(w: &StateVector) -> Result<(NormalForm, [f64; 2])> {
    let nf = normal_form(w)?;
    let v = nf.rotate_in(w)?.v().to_vec();
    Ok((nf, [v[0], v[1]]))
}

/// g restricted to the boundary line is c0 + c1 s + c2 t + s^2 + v1^2 t^2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GCoefficients {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub strictly_convex: bool,
}

pub fn g_coefficients(v1: f64, v2: f64, lambda: f64, qbar: f64) -> GCoefficients {
    GCoefficients {
        c0: qbar * qbar + v1 * v1 * (0.5 + lambda - 2.0 * qbar) - 0.25,
        c1: 2.0 * (qbar - v1 * v1),
        c2: 2.0 * v1 * v1 * v2,
        strictly_convex: v1 != 0.0,
    }
}

impl GCoefficients {
    pub fn eval(&self, v1: f64, t: f64, s: f64) -> f64 {
        self.c0 + self.c1 * s + self.c2 * t + s * s + v1 * v1 * t * t
    }
}

/// v1 (q - u11) - v2 u12
pub fn g1(w: &StateVector, q: f64) -> f64 {
    let c = w.coords();
    c[0] * (q - c[2]) - c[1] * c[3]
}

/// (u11 + q)(q - u11) - u12^2
pub fn g2(w: &StateVector, q: f64) -> f64 {
    let c = w.coords();
    (c[2] + q) * (q - c[2]) - c[3] * c[3]
}

/// g2 - 2 v1bar g1
pub fn g_combined(w: &StateVector, q: f64, v1bar: f64) -> f64 {
    g2(w, q) - 2.0 * v1bar * g1(w, q)
}

fn g_pair(c: [f64; 4], q: f64) -> [f64; 2] {
    [c[0] * (q - c[2]) - c[1] * c[3], (c[2] + q) * (q - c[2]) - c[3] * c[3]]
}

#[derive(Clone, Debug, PartialEq)]
pub struct DivCurlReport {
    /// |∫ g_i dnu - g_i(mean)| for i = 1, 2
    pub defects: [f64; 2],
    pub frequency: Option<f64>,
    pub samples: usize,
}

impl DivCurlReport {
    pub fn with_frequency(mut self, f: f64) -> Self {
        self.frequency = Some(f);
        self
    }

    pub fn tsv_header() -> &'static str {
        "frequency\tsamples\tdefect_g1\tdefect_g2"
    }

    pub fn tsv_row(&self) -> String {
        let f = self.frequency.map_or("-".to_string(), |f| format!("{f}"));
        format!("{f}\t{}\t{:.6e}\t{:.6e}", self.samples, self.defects[0], self.defects[1])
    }
}

/// Commutativity defects of the empirical measure of a planar field (grid
/// values of (w, q)) against the mean (`mean`, `mean_q`).
pub fn divcurl_defect(f: &SubsolutionField, mean: &StateVector, mean_q: f64) -> Result<DivCurlReport> {
    divcurl_defect_weighted(f, mean, mean_q, |_| 1.0)
}

/// Defects of the measure weighted by a test function: |mean of
/// weight(x) (g_i(w(x), q(x)) - g_i(mean))|.
pub fn divcurl_defect_weighted(
    f: &SubsolutionField,
    mean: &StateVector,
    mean_q: f64,
    weight: impl Fn(&[f64]) -> f64 + Sync,
) -> Result<DivCurlReport> {
    if f.d() != 2 || mean.d() != 2 {
        return Err(Error::DimensionError("commutativity defects need d = 2".into()));
    }
    let m = mean.coords();
    let gm = g_pair([m[0], m[1], m[2], m[3]], mean_q);
    let grid = f.grid();
    let comps = f.components();
    let q = f.pressure();
    let term = |i: usize, k: usize| {
        let g = g_pair([comps[0][i], comps[1][i], comps[2][i], comps[3][i]], q[i]);
        weight(&grid.point(i)) * (g[k] - gm[k])
    };
    let sums = [det_sum(grid.len(), |i| term(i, 0)), det_sum(grid.len(), |i| term(i, 1))];
    let n = grid.len() as f64;
    Ok(DivCurlReport { defects: [(sums[0] / n).abs(), (sums[1] / n).abs()], frequency: None, samples: grid.len() })
}

/// Negative control: adds delta (q - u11, -u12) to the velocity. That vector
/// field is curl-free rather than divergence-free, so the result is no longer
/// a subsolution and g1 picks up a non-oscillating positive part.
pub fn corrupt_divergence(f: &SubsolutionField, delta: f64) -> Result<SubsolutionField> {
    if f.d() != 2 {
        return Err(Error::DimensionError("corruption control needs d = 2".into()));
    }
    let mut out = f.clone().without_evaluator();
    let q = out.pressure().to_vec();
    let comps = out.components_mut();
    for i in 0..q.len() {
        let (u11, u12) = (comps[2][i], comps[3][i]);
        comps[0][i] += delta * (q[i] - u11);
        comps[1][i] -= delta * u12;
    }
    Ok(out)
}

/// Frequency sweep of commutativity defects for the oscillation between w1
/// and -w1 on the unit cube.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub w1: StateVector,
    pub n: usize,
    pub frequencies: Vec<f64>,
    pub transition: f64,
    pub margin: f64,
    /// Amplitude of the divergence-breaking corruption, if any.
    pub corruption: Option<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        // a rotated velocity-stress pair: the stress part makes the
        // corruption visible on the plateaus
        let w = StateVector::from_coords(2, vec![0.6, 0.0, 0.3, 0.0]).expect("planar state");
        Self {
            w1: symmetry_apply(&w, 0.4, false).expect("planar state"),
            n: 256,
            frequencies: vec![4.0, 8.0, 16.0, 32.0],
            transition: 0.1,
            margin: 0.1,
            corruption: None,
        }
    }
}

/// Test function of the weighted defects: smooth and without symmetry about
/// the cube centre.
pub fn sweep_weight(x: &[f64]) -> f64 {
    x[0] * x[0] * x[1]
}

pub fn divcurl_sweep(cfg: &SweepConfig) -> Result<Vec<DivCurlReport>> {
    let d = cfg.w1.d();
    let lam = Laminate::dirac(StateVector::zeros(d), 1.0).split_atom(0, &cfg.w1, &cfg.w1.scaled(-1.0))?;
    let cube: Vec<Slab> = (0..d)
        .map(|j| {
            let mut e = vec![0.0; d];
            e[j] = 1.0;
            Slab { normal: e, lo: 0.0, hi: 1.0 }
        })
        .collect();
    cfg.frequencies
        .iter()
        .map(|&f| {
            let opts = RealizeOptions {
                transition: cfg.transition,
                margin: Scale::Relative(cfg.margin),
                period: vec![Scale::Relative(1.0 / f)],
                max_depth: 1,
                ..Default::default()
            };
            let real = Arc::new(Realization::new(&lam, cube.clone(), &opts)?);
            let mut field = field_from(real, cfg.n, Domain::Cube, "sweep")?;
            if let Some(delta) = cfg.corruption {
                field = corrupt_divergence(&field, delta)?;
            }
            Ok(divcurl_defect_weighted(&field, &StateVector::zeros(d), 0.0, sweep_weight)?.with_frequency(f))
        })
        .collect()
}

/// Outcome of comparing the lamination hull grid with the closed slice region.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonReport {
    pub r: f64,
    pub res: usize,
    pub rounds: usize,
    pub converged: bool,
    /// Extra rounds run after the fixed point, and what they added.
    pub confirmation_added: usize,
    pub occupied: usize,
    pub region_nodes: usize,
    /// Nodes where occupancy and region membership disagree, relative to the
    /// region node count.
    pub symmetric_difference: f64,
    pub witness: SlicePoint,
    pub witness_gap: f64,
    pub witness_f: f64,
    pub witness_occupied: bool,
    /// Boundary samples of the convex hull in the slice with nonzero
    /// normal-frame v1.
    pub boundary_samples: usize,
    pub boundary_unoccupied: f64,
    /// (c, fraction of the region's nodes in the plane k that are occupied)
    pub rhombus_coverage: Vec<(f64, f64)>,
}

impl ComparisonReport {
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "key\tvalue");
        let _ = writeln!(s, "r\t{}", self.r);
        let _ = writeln!(s, "res\t{}", self.res);
        let _ = writeln!(s, "rounds\t{}", self.rounds);
        let _ = writeln!(s, "converged\t{}", self.converged);
        let _ = writeln!(s, "confirmation_added\t{}", self.confirmation_added);
        let _ = writeln!(s, "occupied\t{}", self.occupied);
        let _ = writeln!(s, "region_nodes\t{}", self.region_nodes);
        let _ = writeln!(s, "symmetric_difference\t{:.6}", self.symmetric_difference);
        let _ = writeln!(
            s,
            "witness\t{:.6},{:.6},{:.6}\tgap={:.12}\tf={:.12}\toccupied={}",
            self.witness.a, self.witness.b, self.witness.c, self.witness_gap, self.witness_f, self.witness_occupied
        );
        let _ = writeln!(s, "boundary_samples\t{}", self.boundary_samples);
        let _ = writeln!(s, "boundary_unoccupied\t{:.6}", self.boundary_unoccupied);
        for (c, cov) in &self.rhombus_coverage {
            let _ = writeln!(s, "rhombus_coverage\t{c:.6}\t{cov:.6}");
        }
        s
    }
}

/// Point on the ray through `dir` (in the slice) where the hull gap at level r
/// vanishes.
fn boundary_on_ray(dir: SlicePoint, r: f64) -> SlicePoint {
    let at = |s: f64| SlicePoint::new(s * dir.a, s * dir.b, s * dir.c);
    let (mut lo, mut hi) = (0.0, 1.0);
    while hull_gap(&at(hi).embed(), r) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hull_gap(&at(mid).embed(), r) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * hi {
            break;
        }
    }
    at(0.5 * (lo + hi))
}

/// Runs the lattice hull to its fixed point (plus confirmation rounds) and
/// compares it with the closed slice region and with the convex hull.
pub fn hull_strictness_experiment(r: f64, res: usize, boundary_samples: usize, seed: u64) -> Result<ComparisonReport> {
    Ok(hull_strictness_with_grid(r, res, boundary_samples, seed)?.0)
}

/// As `hull_strictness_experiment`, also returning the confirmed occupancy grid.
pub fn hull_strictness_with_grid(r: f64, res: usize, boundary_samples: usize, seed: u64) -> Result<(ComparisonReport, OccupancyGrid)> {
    crate::state::EnergyLevel::new(r)?;
    if res < 2 {
        return Err(Error::InvalidArgument("hull grid needs at least two nodes per axis".into()));
    }
    let grid = lc_hull_slice(r, HullGridSpec::new(res), 4 * res + 8);
    let rounds = grid.history.len() - 1;
    let mut confirmed = grid.clone();
    let confirmation_added = confirmed.extra_rounds(2);
    let grid = confirmed;

    let n = grid.cells.len();
    let (region_nodes, diff) = (0..n)
        .into_par_iter()
        .map(|idx| {
            let (i, j, k) = unindex(&grid, idx);
            let inside = in_closure(grid.node(i, j, k), r);
            (inside as usize, (inside != grid.cells[idx]) as usize)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));

    let witness = SlicePoint::new(0.6 * r.sqrt(), 0.0, 0.0);
    let witness_gap = hull_gap(&witness.embed(), r);
    let witness_f = f_r_eval(witness, r)?;
    let witness_occupied = grid.occupied_near(witness);

    let mut g = rng::seeded(seed);
    let mut hits = 0usize;
    let mut count = 0usize;
    let mut attempts = 0usize;
    while count < boundary_samples && attempts < 100 * boundary_samples.max(1) {
        attempts += 1;
        let dir = SlicePoint::new(rng::normal(&mut g), rng::normal(&mut g), rng::normal(&mut g));
        let p = boundary_on_ray(dir, r);
        // the level-1 normal form, applied to the rescaled point
        let unit = SlicePoint::new(p.a / r.sqrt(), p.b / r.sqrt(), p.c / r);
        let Ok((_, vbar)) = normal_frame(&unit.embed()) else { continue };
        if vbar[0].abs() < 1e-3 {
            continue;
        }
        count += 1;
        if !grid.occupied_near(p) {
            hits += 1;
        }
    }

    let rhombus_coverage = (1..=10)
        .map(|m| {
            let k = m * (res - 1) / 11;
            let mut inside = 0usize;
            let mut occ = 0usize;
            for i in 0..res {
                for j in 0..res {
                    if in_closure(grid.node(i, j, k), r) {
                        inside += 1;
                        occ += grid.occupied(i, j, k) as usize;
                    }
                }
            }
            (grid.node(0, 0, k).c, if inside == 0 { 1.0 } else { occ as f64 / inside as f64 })
        })
        .collect();

    let report = ComparisonReport {
        r,
        res,
        rounds,
        converged: grid.converged,
        confirmation_added,
        occupied: grid.count(),
        region_nodes,
        symmetric_difference: diff as f64 / region_nodes.max(1) as f64,
        witness,
        witness_gap,
        witness_f,
        witness_occupied,
        boundary_samples: count,
        boundary_unoccupied: if count == 0 { 0.0 } else { hits as f64 / count as f64 },
        rhombus_coverage,
    };
    Ok((report, grid))
}

fn unindex(g: &OccupancyGrid, idx: usize) -> (usize, usize, usize) {
    let k = idx % g.res[2];
    let j = (idx / g.res[2]) % g.res[1];
    let i = idx / (g.res[1] * g.res[2]);
    (i, j, k)
}

/// A random point on the boundary of the convex hull at level 1 that is not on
/// the constraint set, built from its normal form: lambda, the normal-frame
/// velocity and the frame rotation are drawn at random. Returns the point and
/// the rotation theta* with normal_form(point).theta = theta* mod pi.
pub fn random_boundary_point(g: &mut rng::Rng) -> (StateVector, f64, f64) {
    let lambda: f64 = g.random_range(-0.45..0.45);
    let speed = (0.5 + lambda).sqrt();
    let alpha = g.random_range(0.0..std::f64::consts::TAU);
    let v = [speed * alpha.cos(), speed * alpha.sin()];
    let u11 = v[0] * v[0] - 0.5;
    let u12 = v[0] * v[1];
    let w0 = StateVector::from_coords(2, vec![v[0], v[1], u11, u12]).expect("planar state");
    let theta = g.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let w = symmetry_apply(&w0, -theta, false).expect("planar state");
    (w, theta, lambda)
}

/// Wave-cone verdict for a planar direction, for cross-checking
/// `boundary_direction`.
pub fn direction_in_cone(dir: &StateVector) -> Result<bool> {
    Ok(wave_cone_witness(dir)?.is_some())
}
