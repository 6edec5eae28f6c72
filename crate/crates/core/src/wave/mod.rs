//! Exact subsolution fields: potentials, localized two-state oscillations and
//! laminate realizations on the unit cube or the torus.
//!
//! Grid arrays always come from the spectral path (potentials sampled, then
//! differentiated in Fourier space), so they satisfy the linear system to
//! round-off at any frequency. When the oscillation is finer than the grid
//! the arrays are an aliased image of the field; measurements then use the
//! closed-form evaluator attached to the field.

pub mod field;
pub mod potential;
pub mod profile;
pub mod realize;

use std::sync::Arc;

pub use field::{component_names, read_fld1, write_csv, write_fld1, Domain, Evaluator, SubsolutionField};
pub use potential::{
    apply_potential, make_potential, make_potential_with_eta, Amplitude, BoxCutoff, CutoffSinusoid, PlaneWave,
    PotentialDescriptor, Quadratic, ScalarPotential, Support, ZeroPotential,
};
pub use profile::{smoothstep, CyclicProfile, Slab};
pub use realize::{sample_points, segment_distance, Measurement, RealizeOptions, Realization, Scale};

use crate::error::{Error, Result};
use crate::laminate::{same_state, Laminate};
use crate::spectral::{self, Grid};
use crate::state::{wave_cone_witness_with, StateVector, WitnessOptions};

/// The oscillation-count cap of the two-state search.
pub const MAX_OSCILLATIONS: f64 = 16384.0;

/// Sampling used to measure built fields.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sampling {
    /// Random points.
    pub random: usize,
    /// Lattice points per axis for the spot check.
    pub lattice: usize,
    pub seed: u64,
}

impl Sampling {
    /// Random points plus a 4x oversampled lattice of the grid.
    pub fn for_grid(d: usize, n: usize) -> Self {
        let lattice = if d == 2 { 4 * n } else { (4 * n).min(96) };
        Self { random: 200_000, lattice, seed: 0x5eed }
    }

    pub fn points(&self, d: usize) -> Vec<Vec<f64>> {
        sample_points(d, self.random, self.lattice, self.seed)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwoStateSpec {
    pub w1: StateVector,
    pub w2: StateVector,
    pub mu1: f64,
    pub mu2: f64,
    pub eps: f64,
    /// Starting oscillation count across the cube.
    pub oscillations: f64,
    /// Grid resolution of the returned arrays.
    pub n: usize,
}

impl TwoStateSpec {
    pub fn new(w1: StateVector, w2: StateVector, mu1: f64, eps: f64) -> Result<Self> {
        let spec = Self { w1, w2, mu1, mu2: 1.0 - mu1, eps, oscillations: 16.0, n: 128 };
        spec.check()?;
        Ok(spec)
    }

    pub fn check(&self) -> Result<()> {
        if self.w1.d() != self.w2.d() {
            return Err(Error::DimensionError("two-state endpoints differ in dimension".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidArgument("eps must be positive".into()));
        }
        if self.mu1 < 0.0 || self.mu2 < 0.0 || (self.mu1 + self.mu2 - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument("weights must be nonnegative and sum to 1".into()));
        }
        let bary = self.w1.scaled(self.mu1).axpy(self.mu2, &self.w2);
        let scale = self.w1.norm().max(self.w2.norm()).max(1.0);
        if bary.norm() > 1e-12 * scale {
            return Err(Error::InvalidArgument(format!("barycenter is {:e} away from 0", bary.norm())));
        }
        let dir = &self.w2 - &self.w1;
        if dir.norm() > 0.0 && wave_cone_witness_with(&dir, WitnessOptions { allow_zero_velocity: true })?.is_none() {
            return Err(Error::NotInWaveCone);
        }
        Ok(())
    }

    fn degenerate(&self) -> bool {
        self.mu1 == 0.0 || self.mu2 == 0.0 || same_state(&self.w1, &self.w2)
    }
}

/// One step of a frequency search.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchStep {
    pub oscillations: f64,
    pub fractions: Vec<f64>,
    /// max_i |fraction_i - weight_i|
    pub fraction_error: f64,
    pub max_deviation: f64,
}

#[derive(Clone, Debug)]
pub struct Built {
    pub field: SubsolutionField,
    pub realization: Arc<Realization>,
    pub history: Vec<SearchStep>,
}

impl Built {
    pub fn last(&self) -> Option<&SearchStep> {
        self.history.last()
    }
}

fn cube_region(d: usize) -> Vec<Slab> {
    (0..d)
        .map(|j| {
            let mut n = vec![0.0; d];
            n[j] = 1.0;
            Slab { normal: n, lo: 0.0, hi: 1.0 }
        })
        .collect()
}

/// Grid field of a realization (base plus perturbation) with the closed-form
/// evaluator attached.
pub fn field_from(real: Arc<Realization>, n: usize, domain: Domain, profile: &str) -> Result<SubsolutionField> {
    let grid = Grid::new(real.d(), n);
    let (mut comps, q) = real.perturbation_on_grid(grid);
    for (c, b) in comps.iter_mut().zip(real.base().coords()) {
        for x in c.iter_mut() {
            *x += b;
        }
    }
    let r2 = real.clone();
    let eval: Evaluator = Arc::new(move |x: &[f64]| r2.evaluate(x));
    Ok(SubsolutionField::new(grid, domain, comps, q, profile)?.with_evaluator(eval))
}

fn two_state_laminate(spec: &TwoStateSpec) -> Result<Laminate> {
    let d = spec.w1.d();
    let mut lam = Laminate::dirac(StateVector::zeros(d), 1.0);
    lam.split_node_unchecked(0, spec.w1.clone(), spec.w2.clone(), spec.mu1);
    lam.validate_with(WitnessOptions { allow_zero_velocity: true })?;
    Ok(lam)
}

/// Realization options of the two-state construction at a given oscillation
/// count: the cutoff margin is eps/8 of the cube side, the transition width
/// starts at eps/8 of the period and shrinks like n^{-1/2} relative to the
/// starting count.
pub fn two_state_options(spec: &TwoStateSpec, oscillations: f64) -> RealizeOptions {
    let shrink = (spec.oscillations / oscillations).sqrt().min(1.0);
    let base = (spec.eps / 8.0).min(0.1);
    RealizeOptions {
        merge: false,
        transition: (base * shrink).min(0.5 * spec.mu1.min(spec.mu2)),
        margin: Scale::Relative(base),
        period: vec![Scale::Relative(1.0 / oscillations)],
        min_width: 0.0,
        max_depth: 1,
        seed: None,
    }
}

/// Builds and measures the two-state field at a fixed oscillation count.
pub fn two_state_at(spec: &TwoStateSpec, oscillations: f64, sampling: &Sampling) -> Result<(Realization, SearchStep)> {
    spec.check()?;
    let lam = two_state_laminate(spec)?;
    let real = Realization::new(&lam, cube_region(spec.w1.d()), &two_state_options(spec, oscillations))?;
    let pts = sampling.points(spec.w1.d());
    let seg = [(spec.w1.clone(), spec.w2.clone())];
    let m = real.measure(&pts, &[spec.w1.clone(), spec.w2.clone()], 0.5 * spec.eps, &seg);
    let err = (m.fractions[0] - spec.mu1).abs().max((m.fractions[1] - spec.mu2).abs());
    Ok((real, SearchStep { oscillations, fractions: m.fractions, fraction_error: err, max_deviation: m.max_deviation }))
}

/// Localized oscillation between w1 and w2 on the unit cube. The oscillation
/// count doubles from `spec.oscillations` until the segment distance stays
/// below eps and the fractions of {|w - w_i| < eps/2} are within eps of the
/// weights.
pub fn two_state_field(spec: &TwoStateSpec) -> Result<Built> {
    two_state_field_with(spec, &Sampling::for_grid(spec.w1.d(), spec.n))
}

pub fn two_state_field_with(spec: &TwoStateSpec, sampling: &Sampling) -> Result<Built> {
    spec.check()?;
    let d = spec.w1.d();
    if spec.degenerate() {
        let lam = Laminate::dirac(StateVector::zeros(d), 1.0);
        let real = Arc::new(Realization::new(&lam, cube_region(d), &RealizeOptions::default())?);
        let field = field_from(real.clone(), spec.n, Domain::Cube, "two-state")?;
        return Ok(Built { field, realization: real, history: Vec::new() });
    }
    let mut n = spec.oscillations.max(1.0);
    let mut history = Vec::new();
    loop {
        let (real, step) = two_state_at(spec, n, sampling)?;
        let pass = step.max_deviation < spec.eps && step.fraction_error < spec.eps;
        history.push(step);
        if pass {
            let real = Arc::new(real);
            let field = field_from(real.clone(), spec.n, Domain::Cube, "two-state")?;
            return Ok(Built { field, realization: real, history });
        }
        n *= 2.0;
        if n > MAX_OSCILLATIONS {
            let last = history.last().expect("one step");
            return Err(Error::ToleranceUnreachable {
                cap: MAX_OSCILLATIONS as u32,
                detail: format!("fraction error {:.3e}, deviation {:.3e}", last.fraction_error, last.max_deviation),
            });
        }
    }
}

/// The two-state field at a fixed oscillation count, without the search or
/// the measurement.
pub fn two_state_field_at(spec: &TwoStateSpec, oscillations: f64) -> Result<Built> {
    spec.check()?;
    let lam = two_state_laminate(spec)?;
    let real = Arc::new(Realization::new(&lam, cube_region(spec.w1.d()), &two_state_options(spec, oscillations))?);
    let field = field_from(real.clone(), spec.n, Domain::Cube, "two-state")?;
    Ok(Built { field, realization: real, history: Vec::new() })
}

/// Options for `laminate_field`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LaminateFieldOptions {
    /// Starting number of periods across each region.
    pub periods: f64,
    pub n: usize,
    pub sampling: Sampling,
}

impl Default for LaminateFieldOptions {
    fn default() -> Self {
        Self { periods: 4.0, n: 128, sampling: Sampling { random: 100_000, lattice: 256, seed: 0x5eed } }
    }
}

/// Realizes a laminate with barycenter `base` on the unit cube: every split
/// is a two-state oscillation confined to the plateau stripe of its parent
/// value. The number of periods per region doubles until the atom fractions
/// are within eps of the weights and all values stay within eps of the split
/// segments.
pub fn laminate_field(lam: &Laminate, eps: f64, base: &StateVector, opts: &LaminateFieldOptions) -> Result<Built> {
    if !same_state(lam.root(), base) {
        return Err(Error::InvalidArgument("laminate barycenter differs from the base state".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("eps must be positive".into()));
    }
    let d = lam.d();
    let levels = lam.order().max(1) as f64;
    let small = (eps / (8.0 * levels)).min(0.05);
    let min_weight = lam.splits().iter().map(|s| s.lambda.min(1.0 - s.lambda)).fold(1.0, f64::min);
    let pts = opts.sampling.points(d);
    let targets: Vec<StateVector> = lam.atoms().iter().map(|a| a.state.clone()).collect();
    let mut periods = opts.periods.max(1.0);
    let mut history = Vec::new();
    loop {
        let ro = RealizeOptions {
            merge: false,
            transition: small.min(0.5 * min_weight),
            margin: Scale::Relative(small),
            period: vec![Scale::Relative(1.0 / periods)],
            min_width: 0.0,
            max_depth: usize::MAX,
            seed: None,
        };
        let real = Realization::new(lam, cube_region(d), &ro)?;
        let segs = real.segments(lam);
        let m = real.measure(&pts, &targets, 0.5 * eps, &segs);
        let err = m.fractions.iter().zip(lam.atoms()).map(|(f, a)| (f - a.weight).abs()).fold(0.0, f64::max);
        let pass = m.max_deviation < eps && err < eps && real.truncated().is_empty();
        history.push(SearchStep { oscillations: periods, fractions: m.fractions, fraction_error: err, max_deviation: m.max_deviation });
        if pass {
            let real = Arc::new(real);
            let field = field_from(real.clone(), opts.n, Domain::Cube, "laminate")?;
            return Ok(Built { field, realization: real, history });
        }
        periods *= 2.0;
        if periods > MAX_OSCILLATIONS {
            return Err(Error::ToleranceUnreachable {
                cap: MAX_OSCILLATIONS as u32,
                detail: format!("fraction error {err:.3e}, deviation {:.3e}", history.last().map_or(0.0, |s: &SearchStep| s.max_deviation)),
            });
        }
    }
}

/// Divergence and momentum residuals of a field in H^{-1}.
pub fn weak_residuals(f: &SubsolutionField) -> (f64, f64) {
    f.weak_residuals()
}

/// Pressure of the stress of `f`: mean-zero on the torus, zero on the cube
/// boundary for cube fields.
pub fn pressure_from_u(f: &SubsolutionField) -> Vec<f64> {
    match f.domain() {
        Domain::Torus => spectral::pressure_torus(f.grid(), &f.u_full()),
        Domain::Cube => spectral::pressure_dirichlet(f.grid(), &f.u_full()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laminate::decompose_vr;
    use crate::state::SlicePoint;

    #[test]
    fn degenerate_two_state_is_zero() {
        let w = StateVector::zeros(2);
        let spec = TwoStateSpec::new(w.clone(), w, 1.0, 0.1).unwrap();
        let b = two_state_field(&spec).unwrap();
        assert!(b.field.components().iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn spec_checks_barycenter() {
        let a = SlicePoint::new(1.0, 0.0, 0.0).embed();
        assert!(TwoStateSpec::new(a.clone(), a.scaled(-1.0), 0.3, 0.1).is_err());
        assert!(TwoStateSpec::new(a.clone(), a.scaled(-1.0), 0.5, 0.1).is_ok());
    }

    #[test]
    fn laminate_field_of_dirac_is_constant() {
        let w = SlicePoint::new(1.0, 0.0, 0.5).embed();
        let lam = Laminate::dirac(w.clone(), 1.0);
        let b = laminate_field(&lam, 0.1, &w, &LaminateFieldOptions::default()).unwrap();
        assert_eq!(b.field.state_at(17), w);
        let (dv, dm) = b.field.weak_residuals();
        assert!(dv < 1e-14 && dm < 1e-14);
    }

    #[test]
    fn laminate_field_rejects_wrong_base() {
        let lam = decompose_vr(SlicePoint::new(0.0, 0.0, 0.0), 1.0).unwrap();
        let other = SlicePoint::new(0.1, 0.0, 0.0).embed();
        assert!(laminate_field(&lam, 0.1, &other, &LaminateFieldOptions::default()).is_err());
    }
}
