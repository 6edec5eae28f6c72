//! Points of the state space R^d x S^d_0, the constraint set, its convex hull
//! and the stationary wave cone.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng;

/// Relative tolerance of the wave-cone predicate.
pub const LAMBDA_TOL: f64 = 1e-10;

/// A state w = (v, u): velocity plus a symmetric trace-free matrix.
///
/// Coordinates are the velocity followed by the independent entries of `u`:
/// diagonal entries u_11 .. u_{d-1,d-1} (u_dd is minus their sum), then the
/// strict upper triangle row by row. For d = 2 this is (a, b, c, d) with
/// z = a + ib and zeta = c + id.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    d: usize,
    coords: Vec<f64>,
}

impl StateVector {
    pub fn dim_for(d: usize) -> usize {
        d + d * (d + 1) / 2 - 1
    }

    pub fn zeros(d: usize) -> Self {
        assert!(d >= 2, "dimension must be at least 2");
        Self { d, coords: vec![0.0; Self::dim_for(d)] }
    }

    pub fn from_coords(d: usize, coords: Vec<f64>) -> Result<Self> {
        if d < 2 || coords.len() != Self::dim_for(d) {
            return Err(Error::DimensionError(format!(
                "expected {} coordinates for d = {d}, got {}",
                Self::dim_for(d.max(2)),
                coords.len()
            )));
        }
        Ok(Self { d, coords })
    }

    /// Builds a state from a velocity and a full symmetric matrix. The matrix
    /// must be symmetric and trace-free up to 1e-12 relative.
    pub fn from_parts(v: &[f64], u: &[f64]) -> Result<Self> {
        let d = v.len();
        if d < 2 || u.len() != d * d {
            return Err(Error::DimensionError(format!(
                "velocity of length {d} with matrix of {} entries",
                u.len()
            )));
        }
        let scale = linalg::frobenius(u);
        let tr = linalg::trace(u, d);
        let mut asym = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                asym = asym.max((u[i * d + j] - u[j * d + i]).abs());
            }
        }
        if tr.abs() > 1e-12 * scale.max(1e-300) && tr.abs() > 1e-300 {
            return Err(Error::InvalidArgument(format!("matrix has trace {tr:e}")));
        }
        if asym > 1e-12 * scale {
            return Err(Error::InvalidArgument(format!(
                "matrix is not symmetric (defect {asym:e})"
            )));
        }
        Ok(Self::from_parts_projected(v, u))
    }

    /// Like `from_parts`, but silently drops any trace and antisymmetric part.
    pub fn from_parts_projected(v: &[f64], u: &[f64]) -> Self {
        let d = v.len();
        let mut coords = Vec::with_capacity(Self::dim_for(d));
        coords.extend_from_slice(v);
        let tr = linalg::trace(u, d) / d as f64;
        for i in 0..d - 1 {
            coords.push(u[i * d + i] - tr);
        }
        for i in 0..d {
            for j in (i + 1)..d {
                coords.push(0.5 * (u[i * d + j] + u[j * d + i]));
            }
        }
        Self { d, coords }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn v(&self) -> &[f64] {
        &self.coords[..self.d]
    }

    pub fn u_components(&self) -> &[f64] {
        &self.coords[self.d..]
    }

    /// Full d x d matrix u, row-major.
    pub fn u_matrix(&self) -> Vec<f64> {
        let d = self.d;
        let uc = self.u_components();
        let mut m = vec![0.0; d * d];
        let mut sum = 0.0;
        for i in 0..d - 1 {
            m[i * d + i] = uc[i];
            sum += uc[i];
        }
        m[d * d - 1] = -sum;
        let mut k = d - 1;
        for i in 0..d {
            for j in (i + 1)..d {
                m[i * d + j] = uc[k];
                m[j * d + i] = uc[k];
                k += 1;
            }
        }
        m
    }

    pub fn norm(&self) -> f64 {
        linalg::norm(&self.coords)
    }

    pub fn dot(&self, other: &Self) -> f64 {
        linalg::dot(&self.coords, &other.coords)
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn speed_sq(&self) -> f64 {
        linalg::dot(self.v(), self.v())
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &Self) -> Self {
        debug_assert_eq!(self.d, other.d);
        let coords = self.coords.iter().zip(&other.coords).map(|(a, b)| a + s * b).collect();
        Self { d: self.d, coords }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { d: self.d, coords: self.coords.iter().map(|c| c * s).collect() }
    }

    /// Convex combination `lambda * self + (1 - lambda) * other`.
    pub fn lerp(&self, other: &Self, lambda: f64) -> Self {
        let coords = self
            .coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
            .collect();
        Self { d: self.d, coords }
    }
}

impl Add for &StateVector {
    type Output = StateVector;
    fn add(self, rhs: &StateVector) -> StateVector {
        self.axpy(1.0, rhs)
    }
}

impl Sub for &StateVector {
    type Output = StateVector;
    fn sub(self, rhs: &StateVector) -> StateVector {
        self.axpy(-1.0, rhs)
    }
}

impl Add for StateVector {
    type Output = StateVector;
    fn add(self, rhs: StateVector) -> StateVector {
        &self + &rhs
    }
}

impl Sub for StateVector {
    type Output = StateVector;
    fn sub(self, rhs: StateVector) -> StateVector {
        &self - &rhs
    }
}

impl Mul<f64> for &StateVector {
    type Output = StateVector;
    fn mul(self, s: f64) -> StateVector {
        self.scaled(s)
    }
}

impl Mul<f64> for StateVector {
    type Output = StateVector;
    fn mul(self, s: f64) -> StateVector {
        self.scaled(s)
    }
}

impl Neg for &StateVector {
    type Output = StateVector;
    fn neg(self) -> StateVector {
        self.scaled(-1.0)
    }
}

/// Complex coordinates of a planar state: z encodes v, zeta encodes u.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComplexState {
    pub z: Complex64,
    pub zeta: Complex64,
}

impl ComplexState {
    pub fn new(z: Complex64, zeta: Complex64) -> Self {
        Self { z, zeta }
    }

    pub fn from_state(w: &StateVector) -> Result<Self> {
        if w.d() != 2 {
            return Err(Error::DimensionError("complex coordinates need d = 2".into()));
        }
        let c = w.coords();
        Ok(Self { z: Complex64::new(c[0], c[1]), zeta: Complex64::new(c[2], c[3]) })
    }

    pub fn to_state(self) -> StateVector {
        StateVector {
            d: 2,
            coords: vec![self.z.re, self.z.im, self.zeta.re, self.zeta.im],
        }
    }

    /// Im(z^2 conj(zeta)); zero exactly on the planar wave cone.
    pub fn cone_defect(self) -> f64 {
        (self.z * self.z * self.zeta.conj()).im
    }
}

/// A point (a, b, c) of the slice {Im zeta = 0}.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlicePoint {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl SlicePoint {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }

    pub fn embed(self) -> StateVector {
        StateVector { d: 2, coords: vec![self.a, self.b, self.c, 0.0] }
    }

    /// Reads back a planar state lying in the slice; the zeta imaginary part is
    /// ignored.
    pub fn from_state(w: &StateVector) -> Self {
        let c = w.coords();
        Self { a: c[0], b: c[1], c: c[2] }
    }

    pub fn distance(self, other: Self) -> f64 {
        ((self.a - other.a).powi(2) + (self.b - other.b).powi(2) + (self.c - other.c).powi(2))
            .sqrt()
    }
}

/// A positive squared-speed level.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct EnergyLevel(f64);

impl EnergyLevel {
    pub fn new(r: f64) -> Result<Self> {
        check_level(r)?;
        Ok(Self(r))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

pub(crate) fn check_level(r: f64) -> Result<()> {
    if r.is_finite() && r > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("energy level must be positive, got {r}")))
    }
}

/// Plane-wave data: unit direction eta with u eta = -qbar eta and v . eta = 0.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveWitness {
    pub eta: Vec<f64>,
    pub qbar: f64,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct WitnessOptions {
    /// Accept v = 0 (then any eigenvector of u is a witness).
    pub allow_zero_velocity: bool,
}

/// The point of the constraint set over velocity `v`: (v, v⊗v - (r/d) Id).
pub fn lift_to_k(v: &[f64], r: f64) -> Result<StateVector> {
    check_level(r)?;
    let s = linalg::dot(v, v);
    if (s - r).abs() > 1e-10 * r {
        return Err(Error::SpeedMismatch { found: s, level: r });
    }
    Ok(lift_unchecked(v, r))
}

pub(crate) fn lift_unchecked(v: &[f64], r: f64) -> StateVector {
    let d = v.len();
    let mut u = linalg::outer(v, v);
    for i in 0..d {
        u[i * d + i] -= r / d as f64;
    }
    StateVector::from_parts_projected(v, &u)
}

/// Largest eigenvalue of v⊗v - u - (r/d) Id; nonpositive exactly on the convex
/// hull of the constraint set at level r.
pub fn hull_gap(w: &StateVector, r: f64) -> f64 {
    let d = w.d();
    let mut m = linalg::outer(w.v(), w.v());
    let u = w.u_matrix();
    for (mi, ui) in m.iter_mut().zip(&u) {
        *mi -= ui;
    }
    for i in 0..d {
        m[i * d + i] -= r / d as f64;
    }
    linalg::lambda_max(&m, d)
}

/// Euclidean distance from `w` to the constraint set at level r.
pub fn dist_to_k(w: &StateVector, r: f64) -> f64 {
    if w.d() == 2 {
        dist_to_k_planar(w, r)
    } else {
        dist_to_k_descent(w, r)
    }
}

fn dist_to_k_planar(w: &StateVector, r: f64) -> f64 {
    let c = w.coords();
    let (a, b, cc, dd) = (c[0], c[1], c[2], c[3]);
    let s = r.sqrt();
    let h = 0.5 * r;
    let f = |t: f64| {
        (a - s * t.cos()).powi(2)
            + (b - s * t.sin()).powi(2)
            + (cc - h * (2.0 * t).cos()).powi(2)
            + (dd - h * (2.0 * t).sin()).powi(2)
    };
    let df = |t: f64| 2.0 * s * (a * t.sin() - b * t.cos()) + 4.0 * h * (cc * (2.0 * t).sin() - dd * (2.0 * t).cos());
    let d2f = |t: f64| 2.0 * s * (a * t.cos() + b * t.sin()) + 8.0 * h * (cc * (2.0 * t).cos() + dd * (2.0 * t).sin());
    const SCAN: usize = 4096;
    let step = 2.0 * PI / SCAN as f64;
    let vals: Vec<f64> = (0..SCAN).map(|i| f(i as f64 * step)).collect();
    let mut best = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    for i in 0..SCAN {
        let prev = vals[(i + SCAN - 1) % SCAN];
        let next = vals[(i + 1) % SCAN];
        if vals[i] > prev || vals[i] > next {
            continue;
        }
        let (lo, hi) = ((i as f64 - 1.0) * step, (i as f64 + 1.0) * step);
        let mut t = i as f64 * step;
        for _ in 0..50 {
            let g = df(t);
            let hss = d2f(t);
            let next_t = if hss > 0.0 { t - g / hss } else { t - g.signum() * step * 0.25 };
            let next_t = next_t.clamp(lo, hi);
            if (next_t - t).abs() < 1e-15 {
                t = next_t;
                break;
            }
            t = next_t;
        }
        best = best.min(f(t));
    }
    best.max(0.0).sqrt()
}

fn dist_to_k_descent(w: &StateVector, r: f64) -> f64 {
    let d = w.d();
    let s = r.sqrt();
    let objective = |n: &[f64]| -> f64 { w.distance(&lift_unchecked(&n.iter().map(|x| s * x).collect::<Vec<_>>(), r)).powi(2) };
    let gradient = |n: &[f64]| -> Vec<f64> {
        let lifted = lift_unchecked(&n.iter().map(|x| s * x).collect::<Vec<_>>(), r);
        let diff: Vec<f64> = w.coords().iter().zip(lifted.coords()).map(|(a, b)| a - b).collect();
        let mut g = vec![0.0; d];
        for i in 0..d {
            g[i] -= 2.0 * s * diff[i];
        }
        // diagonal entries: u_ii = r n_i^2 - r/d, i < d-1 stored; u_dd implied
        for i in 0..d - 1 {
            g[i] -= 2.0 * diff[d + i] * 2.0 * r * n[i];
        }
        let mut k = 2 * d - 1;
        for i in 0..d {
            for j in (i + 1)..d {
                g[i] -= 2.0 * diff[k] * r * n[j];
                g[j] -= 2.0 * diff[k] * r * n[i];
                k += 1;
            }
        }
        let gn = linalg::dot(&g, n);
        g.iter().zip(n).map(|(gi, ni)| gi - gn * ni).collect()
    };
    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(33);
    let speed = linalg::norm(w.v());
    if speed > 1e-12 {
        starts.push(w.v().iter().map(|x| x / speed).collect());
    }
    let mut rng = rng::seeded(0x5eed_d157);
    for _ in 0..32 {
        starts.push(rng::unit_vector(&mut rng, d));
    }
    let mut best = f64::INFINITY;
    for mut n in starts {
        let mut fval = objective(&n);
        let mut step = 0.1 / r.max(1e-12);
        for _ in 0..5000 {
            let g = gradient(&n);
            let gnorm = linalg::norm(&g);
            if gnorm < 1e-10 * r.max(1.0) {
                break;
            }
            let mut accepted = false;
            for _ in 0..60 {
                let trial: Vec<f64> = n.iter().zip(&g).map(|(x, gi)| x - step * gi).collect();
                let tn = linalg::norm(&trial);
                let trial: Vec<f64> = trial.iter().map(|x| x / tn).collect();
                let ft = objective(&trial);
                if ft <= fval - 1e-4 * step * gnorm * gnorm {
                    n = trial;
                    fval = ft;
                    accepted = true;
                    step *= 2.0;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        best = best.min(fval);
    }
    best.max(0.0).sqrt()
}

/// Plane-wave witness for `w` with the default options (v = 0 rejected).
pub fn wave_cone_witness(w: &StateVector) -> Result<Option<WaveWitness>> {
    wave_cone_witness_with(w, WitnessOptions::default())
}

pub fn wave_cone_witness_with(w: &StateVector, opts: WitnessOptions) -> Result<Option<WaveWitness>> {
    let d = w.d();
    let v = w.v();
    let speed = linalg::norm(v);
    let u = w.u_matrix();
    let unorm = linalg::frobenius(&u);
    if speed == 0.0 {
        if !opts.allow_zero_velocity {
            return Err(Error::ZeroVelocity);
        }
        let (vals, vecs) = linalg::sym_eigen(&u, d);
        let k = vals.len() - 1;
        return Ok(Some(witness(vecs[k].clone(), -vals[k])));
    }
    if d == 2 {
        // u v . v_perp with v_perp = (-v2, v1)
        let uv = linalg::mat_vec(&u, v);
        let defect = -uv[0] * v[1] + uv[1] * v[0];
        let zeta_abs = unorm / std::f64::consts::SQRT_2;
        if defect.abs() > LAMBDA_TOL * speed * speed * zeta_abs {
            return Ok(None);
        }
        let eta = vec![-v[1] / speed, v[0] / speed];
        let ue = linalg::mat_vec(&u, &eta);
        let qbar = -linalg::dot(&eta, &ue);
        return Ok(Some(witness(eta, qbar)));
    }
    let vhat: Vec<f64> = v.iter().map(|x| x / speed).collect();
    let basis = linalg::orthogonal_complement(&vhat);
    let m = basis.len();
    let ub: Vec<Vec<f64>> = basis.iter().map(|b| linalg::mat_vec(&u, b)).collect();
    let mut restricted = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            restricted[i * m + j] = linalg::dot(&basis[i], &ub[j]);
        }
    }
    let coupling: Vec<f64> = ub.iter().map(|x| linalg::dot(x, &vhat)).collect();
    let (vals, vecs) = linalg::sym_eigen(&restricted, m);
    let tol = LAMBDA_TOL * unorm.max(f64::MIN_POSITIVE);
    let mut i = 0;
    while i < m {
        let mut j = i + 1;
        while j < m && (vals[j] - vals[i]).abs() <= tol {
            j += 1;
        }
        let group = &vecs[i..j];
        let proj: Vec<f64> = group.iter().map(|x| linalg::dot(x, &coupling)).collect();
        let pnorm = linalg::norm(&proj);
        let coeffs: Option<Vec<f64>> = if pnorm <= tol {
            let mut y = vec![0.0; group.len()];
            y[0] = 1.0;
            Some(y)
        } else if group.len() >= 2 {
            let mut y = vec![0.0; group.len()];
            y[0] = -proj[1];
            y[1] = proj[0];
            Some(y)
        } else {
            None
        };
        if let Some(y) = coeffs {
            let mut x = vec![0.0; m];
            for (yk, vk) in y.iter().zip(group) {
                for t in 0..m {
                    x[t] += yk * vk[t];
                }
            }
            let mut eta = vec![0.0; d];
            for (xk, bk) in x.iter().zip(&basis) {
                for t in 0..d {
                    eta[t] += xk * bk[t];
                }
            }
            let ue = linalg::mat_vec(&u, &eta);
            let en = linalg::norm(&eta);
            let qbar = -linalg::dot(&eta, &ue) / (en * en);
            return Ok(Some(witness(eta, qbar)));
        }
        i = j;
    }
    Ok(None)
}

fn witness(mut eta: Vec<f64>, qbar: f64) -> WaveWitness {
    let n = linalg::norm(&eta);
    for x in eta.iter_mut() {
        *x /= n;
    }
    let lead = eta
        .iter()
        .cloned()
        .fold(0.0f64, |acc, x| if x.abs() > acc.abs() + 1e-14 { x } else { acc });
    if lead < 0.0 {
        for x in eta.iter_mut() {
            *x = -*x;
        }
    }
    WaveWitness { eta, qbar }
}

/// Whether the direction `w` lies in the wave cone with the given plane-wave
/// direction `eta` (v . eta = 0 and u eta parallel to eta), relative tolerance.
pub fn compatible_with(w: &StateVector, eta: &[f64]) -> bool {
    let scale = w.norm().max(f64::MIN_POSITIVE);
    let en = linalg::norm(eta);
    let e: Vec<f64> = eta.iter().map(|x| x / en).collect();
    if linalg::dot(w.v(), &e).abs() > LAMBDA_TOL * scale {
        return false;
    }
    let ue = linalg::mat_vec(&w.u_matrix(), &e);
    let along = linalg::dot(&ue, &e);
    let resid: f64 = ue.iter().zip(&e).map(|(x, y)| (x - along * y).powi(2)).sum::<f64>().sqrt();
    resid <= LAMBDA_TOL * scale
}

/// Rotation (z, zeta) -> (z e^{i theta}, zeta e^{2 i theta}), followed by complex
/// conjugation of both coordinates when `conj` is set.
pub fn symmetry_apply(w: &StateVector, theta: f64, conj: bool) -> Result<StateVector> {
    let cs = ComplexState::from_state(w)?;
    let mut z = cs.z * Complex64::from_polar(1.0, theta);
    let mut zeta = cs.zeta * Complex64::from_polar(1.0, 2.0 * theta);
    if conj {
        z = z.conj();
        zeta = zeta.conj();
    }
    Ok(ComplexState::new(z, zeta).to_state())
}

/// The direction (a - b, a⊗a - b⊗b) joining two points of the constraint set.
pub fn pair_direction(a: &[f64], b: &[f64], r: f64) -> Result<StateVector> {
    check_level(r)?;
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::DimensionError("pair vectors must share a dimension ≥ 2".into()));
    }
    for x in [a, b] {
        let s = linalg::dot(x, x);
        if (s - r).abs() > 1e-10 * r {
            return Err(Error::SpeedMismatch { found: s, level: r });
        }
    }
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x + y).powi(2)).sum::<f64>().sqrt();
    let tol = 1e-10 * r.sqrt();
    if diff <= tol || sum <= tol {
        return Err(Error::DegeneratePair);
    }
    let v: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let aa = linalg::outer(a, a);
    let bb = linalg::outer(b, b);
    let u: Vec<f64> = aa.iter().zip(&bb).map(|(x, y)| x - y).collect();
    Ok(StateVector::from_parts_projected(&v, &u))
}

/// Options for the sampled search in `admissible_segment`.
#[derive(Clone, Copy, Debug)]
pub struct SegmentOptions {
    pub samples: usize,
    pub seed: u64,
    /// Restrict to wave-cone directions (planar case: rotated slice axes).
    pub lambda_only: bool,
}

impl Default for SegmentOptions {
    fn default() -> Self {
        Self { samples: 256, seed: 0, lambda_only: false }
    }
}

/// A segment [w - t dir, w + t dir] inside the convex hull.
#[derive(Clone, Debug)]
pub struct AdmissibleSegment {
    pub direction: StateVector,
    pub half_length: f64,
    /// half_length * |dir_v| / (r - |v|^2), the calibrated constant.
    pub c_hat: f64,
    pub candidates: usize,
}

impl AdmissibleSegment {
    pub fn endpoints(&self, w: &StateVector) -> (StateVector, StateVector) {
        (w.axpy(-self.half_length, &self.direction), w.axpy(self.half_length, &self.direction))
    }
}

pub fn admissible_segment(w: &StateVector, r: f64) -> Result<AdmissibleSegment> {
    admissible_segment_with(w, r, SegmentOptions::default())
}

pub fn admissible_segment_with(w: &StateVector, r: f64, opts: SegmentOptions) -> Result<AdmissibleSegment> {
    check_level(r)?;
    let g0 = hull_gap(w, r);
    if g0 >= 0.0 {
        return Err(Error::NotInterior { gap: g0 });
    }
    let d = w.d();
    let mut rng = rng::seeded(opts.seed);
    let candidates = if opts.lambda_only && d == 2 {
        planar_lambda_candidates(w, opts.samples, &mut rng)
    } else {
        pair_candidates(w, r, opts.samples, &mut rng)
    };
    let target = 0.5 * g0;
    let mut best: Option<(f64, StateVector, f64)> = None;
    let count = candidates.len();
    for dir in candidates {
        if opts.lambda_only && !matches!(wave_cone_witness_with(&dir, WitnessOptions { allow_zero_velocity: true }), Ok(Some(_))) {
            continue;
        }
        let t = max_half_length(w, &dir, r, target);
        let score = t * linalg::norm(dir.v());
        let better = match &best {
            None => true,
            Some((s, _, _)) => score > *s,
        };
        if better {
            best = Some((score, dir, t));
        }
    }
    let (score, direction, half_length) =
        best.ok_or_else(|| Error::InvalidArgument("no candidate directions".into()))?;
    let slack = r - w.speed_sq();
    Ok(AdmissibleSegment { direction, half_length, c_hat: score / slack, candidates: count })
}

fn max_half_length(w: &StateVector, dir: &StateVector, r: f64, target: f64) -> f64 {
    let worst = |t: f64| hull_gap(&w.axpy(t, dir), r).max(hull_gap(&w.axpy(-t, dir), r));
    let mut hi = 1.0 / dir.norm().max(1e-300);
    let mut lo = 0.0;
    let mut guard = 0;
    while worst(hi) <= target {
        lo = hi;
        hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return lo;
        }
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if worst(mid) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    lo
}

fn pair_candidates(w: &StateVector, r: f64, samples: usize, rng: &mut rng::Rng) -> Vec<StateVector> {
    let d = w.d();
    let s = r.sqrt();
    let mut out = Vec::with_capacity(samples + 64);
    let speed = linalg::norm(w.v());
    // pairs straddling the current velocity direction
    if speed > 1e-12 {
        let vhat: Vec<f64> = w.v().iter().map(|x| x / speed).collect();
        let perps = linalg::orthogonal_complement(&vhat);
        for p in perps.iter().take(4) {
            for k in 1..=16 {
                let ang = PI * k as f64 / 34.0;
                let a: Vec<f64> = vhat.iter().zip(p).map(|(x, y)| s * (ang.cos() * x + ang.sin() * y)).collect();
                let b: Vec<f64> = vhat.iter().zip(p).map(|(x, y)| s * (ang.cos() * x - ang.sin() * y)).collect();
                if let Ok(dir) = pair_direction(&a, &b, r) {
                    out.push(dir);
                }
            }
        }
    }
    let structured = out.len();
    while out.len() < structured + samples {
        let a: Vec<f64> = rng::unit_vector(rng, d).into_iter().map(|x| s * x).collect();
        let b: Vec<f64> = rng::unit_vector(rng, d).into_iter().map(|x| s * x).collect();
        if let Ok(dir) = pair_direction(&a, &b, r) {
            out.push(dir);
        }
    }
    out
}

fn planar_lambda_candidates(w: &StateVector, samples: usize, rng: &mut rng::Rng) -> Vec<StateVector> {
    let base = [
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [1.0, 0.0, 1.0],
        [1.0, 0.0, -1.0],
        [0.0, 1.0, 1.0],
        [0.0, 1.0, -1.0],
    ];
    let mut out = Vec::with_capacity(samples);
    let turns = (samples / base.len()).max(4);
    // align the first rotation with the current velocity direction
    let phase = w.v()[1].atan2(w.v()[0]);
    for k in 0..turns {
        let theta = phase + PI * k as f64 / turns as f64;
        for p in &base {
            let dir = SlicePoint::new(p[0], p[1], p[2]).embed();
            out.push(symmetry_apply(&dir, theta, false).expect("planar"));
        }
    }
    while out.len() < samples {
        let mut p = [rng::normal(rng), rng::normal(rng), rng::normal(rng)];
        p[rng.random_range(0..3)] = 0.0;
        let theta = rng.random_range(0.0..PI);
        let dir = SlicePoint::new(p[0], p[1], p[2]).embed();
        if dir.norm() > 1e-9 {
            out.push(symmetry_apply(&dir, theta, false).expect("planar"));
        }
    }
    out
}
