//! Second-order potentials: linear maps from the Hessian of a scalar function
//! to an exact subsolution (v, u, q).

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use super::field::{Domain, SubsolutionField};
use super::profile::smoothstep;
use crate::error::{Error, Result};
use crate::linalg;
use crate::spectral::{self, Grid};
use crate::state::{compatible_with, wave_cone_witness_with, StateVector, WitnessOptions};

/// Amplitudes of the concrete operator.
#[derive(Clone, Debug, PartialEq)]
pub enum Amplitude {
    /// Stream function plus Airy stress function: v = beta * rot grad(eta . grad phi),
    /// M = alpha * cof(Hess phi).
    Planar { beta: f64, alpha: f64 },
    /// v = curl(a (eta . grad phi)), M = curl curl (s phi).
    Spatial { a: [f64; 3], s: [f64; 9] },
}

/// A potential operator whose plane-wave symbol along `eta` is the target
/// state together with the pressure amplitude `qbar`.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialDescriptor {
    d: usize,
    eta: Vec<f64>,
    qbar: f64,
    target: StateVector,
    amplitude: Amplitude,
    /// Row c maps the Hessian (row-major) to output c: state coordinates,
    /// then q.
    map: Vec<Vec<f64>>,
}

pub fn make_potential(w: &StateVector) -> Result<PotentialDescriptor> {
    let wit = wave_cone_witness_with(w, WitnessOptions { allow_zero_velocity: true })?
        .ok_or(Error::NotInWaveCone)?;
    build(w, wit.eta)
}

/// Same as `make_potential` with a prescribed oscillation direction.
pub fn make_potential_with_eta(w: &StateVector, eta: &[f64]) -> Result<PotentialDescriptor> {
    if eta.len() != w.d() {
        return Err(Error::DimensionError("direction does not match state dimension".into()));
    }
    let n = linalg::norm(eta);
    if n == 0.0 {
        return Err(Error::InvalidArgument("zero direction".into()));
    }
    if !compatible_with(w, eta) {
        return Err(Error::NotInWaveCone);
    }
    build(w, eta.iter().map(|x| x / n).collect())
}

const LEVI: [(usize, usize, usize, f64); 6] =
    [(0, 1, 2, 1.0), (1, 2, 0, 1.0), (2, 0, 1, 1.0), (0, 2, 1, -1.0), (2, 1, 0, -1.0), (1, 0, 2, -1.0)];

fn cross(a: &[f64], b: &[f64]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn build(w: &StateVector, eta: Vec<f64>) -> Result<PotentialDescriptor> {
    let d = w.d();
    let u = w.u_matrix();
    let ue = linalg::mat_vec(&u, &eta);
    let qbar = -linalg::dot(&eta, &ue);
    let amplitude = match d {
        2 => {
            let perp = [eta[1], -eta[0]];
            let beta = linalg::dot(w.v(), &perp);
            Amplitude::Planar { beta, alpha: 2.0 * qbar }
        }
        3 => {
            let a = cross(w.v(), &eta);
            // P = u + qbar I, S = C^T P C with C_ib = eps_iab eta_a
            let mut p = u.clone();
            for i in 0..3 {
                p[i * 3 + i] += qbar;
            }
            let mut c = [0.0; 9];
            for &(i, a_, b, sg) in &LEVI {
                c[i * 3 + b] += sg * eta[a_];
            }
            let mut s = [0.0; 9];
            for b in 0..3 {
                for dd in 0..3 {
                    let mut acc = 0.0;
                    for i in 0..3 {
                        for j in 0..3 {
                            acc += c[i * 3 + b] * p[i * 3 + j] * c[j * 3 + dd];
                        }
                    }
                    s[b * 3 + dd] = acc;
                }
            }
            Amplitude::Spatial { a, s }
        }
        _ => return Err(Error::DimensionError(format!("potentials are implemented for d = 2, 3 (got {d})"))),
    };
    let mut desc = PotentialDescriptor { d, eta, qbar, target: w.clone(), amplitude, map: Vec::new() };
    let dim = StateVector::dim_for(d);
    let mut map = vec![vec![0.0; d * d]; dim + 1];
    for a in 0..d {
        for b in 0..d {
            let mut h = vec![0.0; d * d];
            h[a * d + b] += 0.5;
            h[b * d + a] += 0.5;
            let (st, q) = desc.apply_direct(&h);
            for (c, x) in st.coords().iter().enumerate() {
                map[c][a * d + b] = *x;
            }
            map[dim][a * d + b] = q;
        }
    }
    desc.map = map;
    Ok(desc)
}

impl PotentialDescriptor {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn qbar(&self) -> f64 {
        self.qbar
    }

    pub fn target(&self) -> &StateVector {
        &self.target
    }

    pub fn amplitude(&self) -> &Amplitude {
        &self.amplitude
    }

    fn apply_direct(&self, h: &[f64]) -> (StateVector, f64) {
        let d = self.d;
        let g = linalg::mat_vec(h, &self.eta);
        match &self.amplitude {
            Amplitude::Planar { beta, alpha } => {
                let v = [beta * g[1], -beta * g[0]];
                let m = [alpha * h[3], -alpha * h[1], -alpha * h[2], alpha * h[0]];
                let q = 0.5 * (m[0] + m[3]);
                let u = [m[0] - q, m[1], m[2], m[3] - q];
                (StateVector::from_parts_projected(&v, &u), q)
            }
            Amplitude::Spatial { a, s } => {
                let v = cross(&g, a);
                let mut m = [0.0; 9];
                for &(i, a_, b, s1) in &LEVI {
                    for &(j, c, dd, s2) in &LEVI {
                        m[i * 3 + j] += s1 * s2 * s[b * 3 + dd] * h[a_ * 3 + c];
                    }
                }
                let q = (m[0] + m[4] + m[8]) / 3.0;
                for i in 0..3 {
                    m[i * 3 + i] -= q;
                }
                debug_assert_eq!(d, 3);
                (StateVector::from_parts_projected(&v, &m), q)
            }
        }
    }

    /// Output state and pressure for a (symmetric) Hessian, row-major.
    pub fn apply_hessian(&self, h: &[f64]) -> (StateVector, f64) {
        let mut out = vec![0.0; self.map.len()];
        self.accumulate(h, 1.0, &mut out);
        let q = out.pop().unwrap_or(0.0);
        (StateVector::from_coords(self.d, out).expect("descriptor dimension"), q)
    }

    /// out += scale * L[h], with out laid out as state coordinates then q.
    pub fn accumulate(&self, h: &[f64], scale: f64, out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(&self.map) {
            *o += scale * row.iter().zip(h).map(|(m, x)| m * x).sum::<f64>();
        }
    }

    /// Fourier multiplier of output `c` at angular wavevector k (acting on phi-hat).
    pub fn symbol(&self, c: usize, k: &[f64]) -> f64 {
        let d = self.d;
        let row = &self.map[c];
        let mut s = 0.0;
        for a in 0..d {
            for b in 0..d {
                s -= row[a * d + b] * k[a] * k[b];
            }
        }
        s
    }

    /// Frobenius norm of the Hessian-to-output map, an upper bound for its
    /// operator norm.
    pub fn operator_norm(&self) -> f64 {
        self.map.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn outputs(&self) -> usize {
        self.map.len()
    }
}

/// Where a potential lives, which fixes how it is sampled on a grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Support {
    /// 1-periodic along every axis.
    Periodic,
    /// Compactly supported inside the unit cube.
    Compact,
    /// Neither; grid samples use the closed-form Hessian pointwise.
    Global,
}

/// A scalar potential with closed-form second derivatives.
pub trait ScalarPotential: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn hessian(&self, x: &[f64]) -> Vec<f64>;
    fn support(&self) -> Support;
}

/// phi(x) = sin(k . x + phase).
#[derive(Clone, Debug)]
pub struct PlaneWave {
    pub wavevector: Vec<f64>,
    pub phase: f64,
}

impl PlaneWave {
    /// Wave with `cycles` oscillations per unit length along the unit direction `eta`.
    pub fn along(eta: &[f64], cycles: f64, phase: f64) -> Self {
        let k = 2.0 * std::f64::consts::PI * cycles;
        Self { wavevector: eta.iter().map(|x| x * k).collect(), phase }
    }
}

fn is_lattice(k: &[f64]) -> bool {
    k.iter().all(|x| {
        let m = x / (2.0 * std::f64::consts::PI);
        (m - m.round()).abs() < 1e-12 * m.abs().max(1.0)
    })
}

impl ScalarPotential for PlaneWave {
    fn dim(&self) -> usize {
        self.wavevector.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        (linalg::dot(&self.wavevector, x) + self.phase).sin()
    }

    fn hessian(&self, x: &[f64]) -> Vec<f64> {
        let s = -(linalg::dot(&self.wavevector, x) + self.phase).sin();
        linalg::outer(&self.wavevector, &self.wavevector).into_iter().map(|k| k * s).collect()
    }

    fn support(&self) -> Support {
        if is_lattice(&self.wavevector) {
            Support::Periodic
        } else {
            Support::Global
        }
    }
}

/// Tensorized quintic-smoothstep box cutoff: 1 on [lo+m, hi-m] per axis, 0
/// outside [lo, hi].
#[derive(Clone, Debug)]
pub struct BoxCutoff {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub margin: f64,
}

impl BoxCutoff {
    pub fn unit_cube(d: usize, margin: f64) -> Self {
        Self { lo: vec![0.0; d], hi: vec![1.0; d], margin }
    }

    fn axis(&self, j: usize, x: f64) -> [f64; 3] {
        let m = self.margin;
        let l = smoothstep((x - self.lo[j]) / m);
        let r = smoothstep((self.hi[j] - x) / m);
        [l[0] * r[0], (l[1] * r[0] - l[0] * r[1]) / m, (l[2] * r[0] - 2.0 * l[1] * r[1] + l[0] * r[2]) / (m * m)]
    }

    /// Value, gradient, and Hessian (row-major).
    pub fn eval(&self, x: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let d = x.len();
        let parts: Vec<[f64; 3]> = (0..d).map(|j| self.axis(j, x[j])).collect();
        let prod = |skip: &[usize]| -> f64 {
            (0..d).filter(|j| !skip.contains(j)).map(|j| parts[j][0]).product()
        };
        let value = prod(&[]);
        let grad: Vec<f64> = (0..d).map(|j| parts[j][1] * prod(&[j])).collect();
        let mut hess = vec![0.0; d * d];
        for a in 0..d {
            for b in 0..d {
                hess[a * d + b] = if a == b {
                    parts[a][2] * prod(&[a])
                } else {
                    parts[a][1] * parts[b][1] * prod(&[a, b])
                };
            }
        }
        (value, grad, hess)
    }
}

/// phi(x) = chi(x) sin(k . x + phase) / |k|^2.
#[derive(Clone, Debug)]
pub struct CutoffSinusoid {
    pub cutoff: BoxCutoff,
    pub wave: PlaneWave,
}

impl ScalarPotential for CutoffSinusoid {
    fn dim(&self) -> usize {
        self.wave.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let k2 = linalg::dot(&self.wave.wavevector, &self.wave.wavevector);
        self.cutoff.eval(x).0 * self.wave.value(x) / k2
    }

    fn hessian(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len();
        let k = &self.wave.wavevector;
        let k2 = linalg::dot(k, k);
        let arg = linalg::dot(k, x) + self.wave.phase;
        let (s, c) = arg.sin_cos();
        let (chi, g, h) = self.cutoff.eval(x);
        let mut out = vec![0.0; d * d];
        for a in 0..d {
            for b in 0..d {
                out[a * d + b] =
                    (h[a * d + b] * s + (g[a] * k[b] + g[b] * k[a]) * c - chi * k[a] * k[b] * s) / k2;
            }
        }
        out
    }

    fn support(&self) -> Support {
        Support::Compact
    }
}

/// phi(x) = x^T A x / 2 with symmetric A; constant Hessian.
#[derive(Clone, Debug)]
pub struct Quadratic {
    pub hess: Vec<f64>,
    pub d: usize,
}

impl ScalarPotential for Quadratic {
    fn dim(&self) -> usize {
        self.d
    }

    fn value(&self, x: &[f64]) -> f64 {
        0.5 * linalg::dot(x, &linalg::mat_vec(&self.hess, x))
    }

    fn hessian(&self, _x: &[f64]) -> Vec<f64> {
        self.hess.clone()
    }

    fn support(&self) -> Support {
        Support::Global
    }
}

/// phi = 0.
#[derive(Clone, Debug)]
pub struct ZeroPotential(pub usize);

impl ScalarPotential for ZeroPotential {
    fn dim(&self) -> usize {
        self.0
    }

    fn value(&self, _x: &[f64]) -> f64 {
        0.0
    }

    fn hessian(&self, _x: &[f64]) -> Vec<f64> {
        vec![0.0; self.0 * self.0]
    }

    fn support(&self) -> Support {
        Support::Periodic
    }
}

/// Accumulates sum_i L_i[phi_i] spectrally: each phi_i is given by its samples
/// on the grid. Returns one array per output (state coordinates, then q).
pub(crate) struct SpectralAccumulator {
    grid: Grid,
    outputs: Vec<Vec<Complex64>>,
}

impl SpectralAccumulator {
    pub(crate) fn new(grid: Grid) -> Self {
        let dim = StateVector::dim_for(grid.d);
        Self { grid, outputs: vec![vec![Complex64::new(0.0, 0.0); grid.len()]; dim + 1] }
    }

    pub(crate) fn add(&mut self, desc: &PotentialDescriptor, phi: &[f64]) {
        let grid = self.grid;
        let hat = spectral::forward(grid, phi);
        let wavevectors: Vec<Option<Vec<f64>>> = (0..grid.len())
            .into_par_iter()
            .map(|idx| if grid.is_nyquist(idx) { None } else { Some(grid.wavevector(idx)) })
            .collect();
        self.outputs.par_iter_mut().enumerate().for_each(|(c, out)| {
            for (idx, k) in wavevectors.iter().enumerate() {
                if let Some(k) = k {
                    out[idx] += desc.symbol(c, k) * hat[idx];
                }
            }
        });
    }

    pub(crate) fn finish(self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let grid = self.grid;
        let mut arrays: Vec<Vec<f64>> = self.outputs.into_par_iter().map(|h| spectral::inverse(grid, h)).collect();
        let q = arrays.pop().unwrap_or_default();
        (arrays, q)
    }
}

/// Samples phi on the grid and returns the field L[phi]. Periodic and
/// compactly supported potentials are differentiated spectrally, so the
/// arrays satisfy the linear system to round-off; global potentials use
/// their closed-form Hessian at each grid point.
pub fn apply_potential(desc: &PotentialDescriptor, phi: Arc<dyn ScalarPotential>, n: usize) -> Result<SubsolutionField> {
    let d = desc.d();
    if phi.dim() != d {
        return Err(Error::DimensionError("potential and descriptor dimensions differ".into()));
    }
    let grid = Grid::new(d, n);
    let dim = StateVector::dim_for(d);
    let (comps, q) = match phi.support() {
        Support::Periodic | Support::Compact => {
            let samples: Vec<f64> = (0..grid.len()).into_par_iter().map(|i| phi.value(&grid.point(i))).collect();
            let mut acc = SpectralAccumulator::new(grid);
            acc.add(desc, &samples);
            acc.finish()
        }
        Support::Global => {
            let rows: Vec<Vec<f64>> = (0..grid.len())
                .into_par_iter()
                .map(|i| {
                    let mut out = vec![0.0; dim + 1];
                    desc.accumulate(&phi.hessian(&grid.point(i)), 1.0, &mut out);
                    out
                })
                .collect();
            let mut comps = vec![vec![0.0; grid.len()]; dim];
            let mut q = vec![0.0; grid.len()];
            for (i, row) in rows.into_iter().enumerate() {
                for c in 0..dim {
                    comps[c][i] = row[c];
                }
                q[i] = row[dim];
            }
            (comps, q)
        }
    };
    let domain = if phi.support() == Support::Compact { Domain::Cube } else { Domain::Torus };
    let desc2 = desc.clone();
    let eval = Arc::new(move |x: &[f64]| desc2.apply_hessian(&phi.hessian(x)));
    Ok(SubsolutionField::new(grid, domain, comps, q, "potential")?.with_evaluator(eval))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::state::{pair_direction, SlicePoint};
    use rand::Rng as _;

    fn frame_state(v: [f64; 2], u11: f64) -> StateVector {
        StateVector::from_parts(&v, &[u11, 0.0, 0.0, -u11]).unwrap()
    }

    #[test]
    fn planar_plane_wave_reproduces_direction() {
        // eta = (0,1): v = (1,0), u = diag(s, -s) with qbar = s
        let w = frame_state([1.0, 0.0], 0.3);
        let desc = make_potential(&w).unwrap();
        assert_eq!(desc.eta(), &[0.0, 1.0]);
        let phi = PlaneWave { wavevector: vec![0.0, 1.0], phase: 0.0 };
        for i in 0..50 {
            let x = [0.1 * i as f64, 0.37 * i as f64];
            let (st, q) = desc.apply_hessian(&phi.hessian(&x));
            let expect = w.scaled(-x[1].sin());
            assert!(st.distance(&expect) < 1e-12);
            assert!((q - desc.qbar() * -x[1].sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn pure_stress_direction_has_no_velocity() {
        let w = frame_state([0.0, 0.0], 0.5);
        let desc = make_potential(&w).unwrap();
        match desc.amplitude() {
            Amplitude::Planar { beta, .. } => assert_eq!(*beta, 0.0),
            _ => unreachable!(),
        }
        let h = [0.3, -0.2, -0.2, 1.1];
        let (st, _) = desc.apply_hessian(&h);
        assert_eq!(st.v(), &[0.0, 0.0]);
    }

    #[test]
    fn spatial_symbol_matches_pair_direction() {
        let r: f64 = 2.0;
        let s = r.sqrt();
        let w = pair_direction(&[s, 0.0, 0.0], &[0.0, s, 0.0], r).unwrap();
        let desc = make_potential_with_eta(&w, &[0.0, 0.0, 1.0]).unwrap();
        let hess = linalg::outer(&[0.0, 0.0, 1.0], &[0.0, 0.0, 1.0]);
        let (st, q) = desc.apply_hessian(&hess);
        assert!(st.distance(&w) < 1e-10 * w.norm());
        assert!((q - desc.qbar()).abs() < 1e-12);
    }

    #[test]
    fn random_lambda_symbols() {
        let mut g = rng::seeded(11);
        for _ in 0..200 {
            let theta: f64 = g.random_range(0.0..std::f64::consts::TAU);
            let w = frame_state([g.random_range(-1.0..1.0), 0.0], g.random_range(-1.0..1.0));
            let w = crate::state::symmetry_apply(&w, theta, false).unwrap();
            let desc = make_potential(&w).unwrap();
            let e = desc.eta().to_vec();
            let (st, _) = desc.apply_hessian(&linalg::outer(&e, &e));
            assert!(st.distance(&w) < 1e-10 * w.norm().max(1.0));
        }
    }

    #[test]
    fn rejects_directions_outside_the_cone() {
        let w = SlicePoint::new(1.0, 0.0, 0.0).embed() + crate::state::ComplexState::new(
            num_complex::Complex64::new(0.0, 0.0),
            num_complex::Complex64::new(0.0, 1.0),
        )
        .to_state();
        assert_eq!(make_potential(&w), Err(Error::NotInWaveCone));
    }

    #[test]
    fn divergence_free_for_arbitrary_hessians() {
        // symbols annihilate k: sum_j k_j L_{j}(k k^T) = 0 for v, and the
        // momentum symbol vanishes as well
        let mut g = rng::seeded(3);
        for d in [2usize, 3] {
            for _ in 0..20 {
                let w = if d == 2 {
                    crate::state::symmetry_apply(&frame_state([g.random_range(-1.0..1.0), 0.0], g.random_range(-1.0..1.0)), g.random_range(0.0..6.0), false).unwrap()
                } else {
                    let a = rng::unit_vector(&mut g, 3);
                    let b = rng::unit_vector(&mut g, 3);
                    pair_direction(&a, &b, 1.0).unwrap()
                };
                let desc = make_potential(&w).unwrap();
                let k = rng::unit_vector(&mut g, d);
                let sym: Vec<f64> = (0..desc.outputs()).map(|c| desc.symbol(c, &k)).collect();
                let div: f64 = (0..d).map(|j| k[j] * sym[j]).sum();
                assert!(div.abs() < 1e-12);
                let full = StateVector::from_coords(d, sym[..sym.len() - 1].to_vec()).unwrap().u_matrix();
                for i in 0..d {
                    let m: f64 = (0..d).map(|j| k[j] * full[i * d + j]).sum::<f64>() + k[i] * sym[sym.len() - 1];
                    assert!(m.abs() < 1e-12);
                }
            }
        }
    }
}
