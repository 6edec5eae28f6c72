//! Realization of a laminate as an exact subsolution: every split becomes a
//! one-dimensional oscillation, and refinements live inside the plateau
//! stripes of their parent.
//!
//! A block oscillates along a unit direction `eta` through a cyclic profile
//! with one plateau per leaf. The perturbation of a block is
//! sum_i L_i[chi * H_i(n x.eta + phase) / n^2] where L_i is the potential
//! operator for (leaf_i - block root), chi is the block cutoff and H_i'' is
//! psi_i - mu_i. Inside the cutoff interior this equals leaf_i - root on the
//! plateau of leaf i.

use rand::Rng as _;
use rayon::prelude::*;

use super::potential::{make_potential_with_eta, PotentialDescriptor, SpectralAccumulator};
use super::profile::{slab_cutoff, CyclicProfile, Segment, Slab};
use crate::error::{Error, Result};
use crate::laminate::Laminate;
use crate::linalg;
use crate::rng;
use crate::spectral::Grid;
use crate::state::{compatible_with, wave_cone_witness_with, StateVector, WitnessOptions};

/// A length given either absolutely (unit-torus coordinates) or as a
/// fraction of a reference width.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Scale {
    Relative(f64),
    Absolute(f64),
}

impl Scale {
    pub fn resolve(self, width: f64) -> f64 {
        match self {
            Scale::Relative(f) => f * width,
            Scale::Absolute(a) => a,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RealizeOptions {
    /// Fold descendants that oscillate along the same direction into one block.
    pub merge: bool,
    /// Transition width as a fraction of the period, capped at half the
    /// lightest leaf weight of each block.
    pub transition: f64,
    /// Cutoff ramp width, relative to the narrowest face-to-face width of the
    /// block region (root) or to the plateau stripe (refinements).
    pub margin: Scale,
    /// Oscillation period per depth, relative to the smaller of the region
    /// extent along the oscillation direction and the margin reference width;
    /// the last entry repeats.
    pub period: Vec<Scale>,
    /// Refinements whose stripe would be narrower than this are dropped.
    pub min_width: f64,
    pub max_depth: usize,
    /// Random phases when set, zero phases otherwise.
    pub seed: Option<u64>,
}

impl Default for RealizeOptions {
    fn default() -> Self {
        Self {
            merge: false,
            transition: 0.05,
            margin: Scale::Relative(0.05),
            period: vec![Scale::Relative(1.0 / 16.0)],
            min_width: 0.0,
            max_depth: usize::MAX,
            seed: None,
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Leaf {
    pub(crate) state: StateVector,
    pub(crate) desc: Option<PotentialDescriptor>,
    pub(crate) child: Option<usize>,
}

#[derive(Clone, Debug)]
pub(crate) struct Block {
    pub(crate) node: usize,
    pub(crate) eta: Vec<f64>,
    pub(crate) freq: f64,
    pub(crate) phase: f64,
    pub(crate) margin: f64,
    /// Slabs this block adds to its inherited region.
    pub(crate) own: Vec<Slab>,
    pub(crate) profile: CyclicProfile,
    pub(crate) leaves: Vec<Leaf>,
    /// sup |H_i|, sup |H_i'| per leaf
    bounds: Vec<(f64, f64)>,
}

/// A laminate turned into a field. Values are base + perturbation.
#[derive(Clone, Debug)]
pub struct Realization {
    d: usize,
    base: StateVector,
    root_region: Vec<Slab>,
    blocks: Vec<Block>,
    /// Laminate nodes whose refinement was dropped (too thin or too deep).
    truncated: Vec<usize>,
}

/// Occupancy statistics of a realized field on sample points.
#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    /// Fraction of samples within `radius` of each target state.
    pub fractions: Vec<f64>,
    /// Largest distance of a sample value to the allowed segments.
    pub max_deviation: f64,
    pub samples: usize,
}

fn axis_of(eta: &[f64]) -> Option<usize> {
    let i = eta.iter().position(|x| (x.abs() - 1.0).abs() < 1e-12)?;
    Some(i)
}

fn parallel(a: &[f64], b: &[f64]) -> bool {
    linalg::dot(a, b).abs() > 1.0 - 1e-12
}

fn unit(d: usize, j: usize) -> Vec<f64> {
    let mut e = vec![0.0; d];
    e[j] = 1.0;
    e
}

struct Builder<'a> {
    lam: &'a Laminate,
    opts: &'a RealizeOptions,
    rng: Option<rng::Rng>,
    blocks: Vec<Block>,
    truncated: Vec<usize>,
}

impl Builder<'_> {
    fn split_eta(&self, node: usize) -> Result<Vec<f64>> {
        let lam = self.lam;
        let sp = &lam.splits()[lam.nodes()[node].split.expect("split node")];
        let dir = &lam.nodes()[sp.children[1]].state - &lam.nodes()[sp.children[0]].state;
        let wit = wave_cone_witness_with(&dir, WitnessOptions { allow_zero_velocity: true })?
            .ok_or(Error::NotInWaveCone)?;
        Ok(wit.eta)
    }

    /// DFS of the nodes folded into a block rooted at `node`: returns leaf node ids.
    fn collect(&self, node: usize, eta: &[f64], top: bool, out: &mut Vec<usize>) {
        let lam = self.lam;
        match lam.nodes()[node].split {
            Some(k) => {
                let sp = &lam.splits()[k];
                let dir = &lam.nodes()[sp.children[1]].state - &lam.nodes()[sp.children[0]].state;
                if top || (self.opts.merge && compatible_with(&dir, eta)) {
                    for &c in &sp.children {
                        self.collect(c, eta, false, out);
                    }
                } else {
                    out.push(node);
                }
            }
            None => out.push(node),
        }
    }

    /// Builds the block rooted at a split node inside a region described by
    /// (normal, width) pairs. Returns None if it cannot be realized.
    fn block(&mut self, node: usize, region: &[(Vec<f64>, f64)], base_width: f64, depth: usize) -> Result<Option<usize>> {
        let lam = self.lam;
        let d = lam.d();
        if depth >= self.opts.max_depth {
            return Ok(None);
        }
        let eta = self.split_eta(node)?;
        let root_state = lam.nodes()[node].state.clone();
        let root_weight = lam.nodes()[node].weight;
        let mut leaf_nodes = Vec::new();
        self.collect(node, &eta, true, &mut leaf_nodes);
        let weights: Vec<f64> = leaf_nodes.iter().map(|&i| lam.nodes()[i].weight / root_weight).collect();

        // region bookkeeping and localization along unbounded axes
        let mut own = Vec::new();
        let mut slabs: Vec<(Vec<f64>, f64)> = region.to_vec();
        let bounded = |j: usize, s: &[(Vec<f64>, f64)]| s.iter().any(|(n, _)| parallel(n, &unit(d, j)));
        let axis = axis_of(&eta);
        let mut integer = false;
        for j in 0..d {
            if eta[j].abs() > 1e-12 && !bounded(j, &slabs) {
                if axis == Some(j) {
                    integer = true;
                } else {
                    own.push(Slab { normal: unit(d, j), lo: 0.0, hi: 1.0 });
                    slabs.push((unit(d, j), 1.0));
                }
            }
        }
        let extent = if let Some(w) = slabs.iter().filter(|(n, _)| parallel(n, &eta)).map(|(_, w)| *w).reduce(f64::min) {
            w
        } else if integer {
            1.0
        } else {
            (0..d)
                .map(|j| {
                    let w = slabs.iter().filter(|(n, _)| parallel(n, &unit(d, j))).map(|(_, w)| *w).fold(1.0, f64::min);
                    eta[j].abs() * w
                })
                .sum()
        };
        let own_min = own.iter().map(|s| s.width()).fold(f64::INFINITY, f64::min);
        let margin = self.opts.margin.resolve(base_width.min(own_min));
        if slabs.iter().any(|(_, w)| *w <= 2.0 * margin) {
            self.truncated.push(node);
            return Ok(None);
        }
        let scale = self.opts.period[depth.min(self.opts.period.len() - 1)];
        // refinements scale their period with the stripe so that the cutoff
        // ramp stays many periods wide
        let mut freq = 1.0 / scale.resolve(extent.min(base_width));
        if integer {
            freq = freq.round().max(1.0);
        }
        if freq * extent < 1.0 {
            self.truncated.push(node);
            return Ok(None);
        }
        // light leaves get narrower transitions
        let lightest = weights.iter().cloned().fold(1.0, f64::min);
        let profile = CyclicProfile::new(&weights, self.opts.transition.min(0.5 * lightest))
            .ok_or_else(|| Error::InvalidArgument("transition width exceeds a leaf weight".into()))?;
        let phase = self.rng.as_mut().map_or(0.0, |g| g.random::<f64>());
        let mut leaves = Vec::with_capacity(leaf_nodes.len());
        for &i in &leaf_nodes {
            let state = lam.nodes()[i].state.clone();
            let delta = &state - &root_state;
            let desc = if delta.norm() == 0.0 { None } else { Some(make_potential_with_eta(&delta, &eta)?) };
            leaves.push(Leaf { state, desc, child: None });
        }
        let bounds = (0..leaves.len()).map(|i| profile.bounds(i)).collect();
        let id = self.blocks.len();
        self.blocks.push(Block { node, eta: eta.clone(), freq, phase, margin, own, profile, leaves, bounds });

        // refinements inside plateau stripes
        for li in 0..leaf_nodes.len() {
            let i = leaf_nodes[li];
            if lam.nodes()[i].split.is_none() {
                continue;
            }
            let (ps, pe) = self.blocks[id].profile.plateau(li);
            let stripe = (pe - ps) / freq;
            if stripe < self.opts.min_width {
                self.truncated.push(i);
                continue;
            }
            let mut child_region: Vec<(Vec<f64>, f64)> = slabs.iter().map(|(n, w)| (n.clone(), w - 2.0 * margin)).collect();
            child_region.push((eta.clone(), stripe));
            if let Some(c) = self.block(i, &child_region, stripe, depth + 1)? {
                self.blocks[id].leaves[li].child = Some(c);
            }
        }
        Ok(Some(id))
    }
}

/// Per-point information handed to visitors.
pub(crate) struct Visit<'a> {
    pub(crate) block: &'a Block,
    pub(crate) id: usize,
    pub(crate) chi: f64,
    pub(crate) grad: Vec<f64>,
    pub(crate) hess: Vec<f64>,
    pub(crate) t: f64,
}

impl Realization {
    /// Builds the realization of `lam` (whose root is the base state) inside
    /// `region`; an empty region means the whole torus.
    pub fn new(lam: &Laminate, region: Vec<Slab>, opts: &RealizeOptions) -> Result<Self> {
        lam.validate_with(WitnessOptions { allow_zero_velocity: true })?;
        if opts.period.is_empty() || !(0.0..0.5).contains(&opts.transition) {
            return Err(Error::InvalidArgument("bad realization options".into()));
        }
        let d = lam.d();
        let mut b = Builder { lam, opts, rng: opts.seed.map(rng::seeded), blocks: Vec::new(), truncated: Vec::new() };
        if lam.nodes()[0].split.is_some() {
            let tmpl: Vec<(Vec<f64>, f64)> = region.iter().map(|s| (s.normal.clone(), s.width())).collect();
            let base_width = tmpl.iter().map(|(_, w)| *w).fold(1.0, f64::min);
            b.block(0, &tmpl, base_width, 0)?;
        }
        Ok(Self { d, base: lam.root().clone(), root_region: region, blocks: b.blocks, truncated: b.truncated })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn base(&self) -> &StateVector {
        &self.base
    }

    pub fn truncated(&self) -> &[usize] {
        &self.truncated
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// Oscillation frequencies of all blocks, in construction order.
    pub fn frequencies(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.freq).collect()
    }

    pub(crate) fn walk(&self, x: &[f64], mut f: impl FnMut(&Visit<'_>)) {
        if self.blocks.is_empty() {
            return;
        }
        let mut id = 0;
        let mut slabs: Vec<Slab> = self.root_region.iter().cloned().chain(self.blocks[0].own.iter().cloned()).collect();
        loop {
            let blk = &self.blocks[id];
            let Some((chi, grad, hess)) = slab_cutoff(&slabs, blk.margin, x) else { break };
            let y = linalg::dot(&blk.eta, x);
            let t = blk.freq * y + blk.phase;
            f(&Visit { block: blk, id, chi, grad, hess, t });
            let Segment::Plateau(j) = blk.profile.segment(t) else { break };
            let Some(c) = blk.leaves[j].child else { break };
            let k = t.floor();
            let (ps, pe) = blk.profile.plateau(j);
            let lo = (k + ps - blk.phase) / blk.freq;
            let hi = (k + pe - blk.phase) / blk.freq;
            let mut next: Vec<Slab> = slabs.iter().map(|s| s.shrunk(blk.margin)).collect();
            next.push(Slab { normal: blk.eta.clone(), lo, hi });
            next.extend(self.blocks[c].own.iter().cloned());
            slabs = next;
            id = c;
        }
    }

    /// Hessian of chi * H_i(t) / n^2 for leaf i of the visited block.
    fn leaf_hessian(v: &Visit<'_>, i: usize) -> Vec<f64> {
        let blk = v.block;
        let d = blk.eta.len();
        let n = blk.freq;
        let [h0, h1, h2] = blk.profile.eval(i, v.t);
        let mut out = vec![0.0; d * d];
        for a in 0..d {
            for b in 0..d {
                out[a * d + b] = v.chi * h2 * blk.eta[a] * blk.eta[b]
                    + (v.grad[a] * blk.eta[b] + blk.eta[a] * v.grad[b]) * h1 / n
                    + v.hess[a * d + b] * h0 / (n * n);
            }
        }
        out
    }

    /// Closed-form perturbation (state coordinates, then q) at x.
    pub fn perturbation(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; StateVector::dim_for(self.d) + 1];
        self.walk(x, |v| {
            for (i, leaf) in v.block.leaves.iter().enumerate() {
                if let Some(desc) = &leaf.desc {
                    desc.accumulate(&Self::leaf_hessian(v, i), 1.0, &mut out);
                }
            }
        });
        out
    }

    /// Closed-form state and pressure at x.
    pub fn evaluate(&self, x: &[f64]) -> (StateVector, f64) {
        let mut p = self.perturbation(x);
        let q = p.pop().unwrap_or(0.0);
        for (a, b) in p.iter_mut().zip(self.base.coords()) {
            *a += b;
        }
        (StateVector::from_coords(self.d, p).expect("dimension"), q)
    }

    /// Perturbation sampled on the grid through the spectral path: the
    /// potentials are sampled and differentiated in Fourier space, so the
    /// arrays solve the linear system to round-off.
    pub fn perturbation_on_grid(&self, grid: Grid) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut acc = SpectralAccumulator::new(grid);
        for (desc, phi) in self.sampled_potentials(grid).into_iter().flatten() {
            acc.add(desc, &phi);
        }
        acc.finish()
    }

    /// The same perturbation split by block, in block order (parents before
    /// their refinements). Each part is an exact subsolution on its own.
    pub fn block_perturbations_on_grid(&self, grid: Grid) -> Vec<(Vec<Vec<f64>>, Vec<f64>)> {
        self.sampled_potentials(grid)
            .into_iter()
            .map(|parts| {
                let mut acc = SpectralAccumulator::new(grid);
                for (desc, phi) in parts {
                    acc.add(desc, &phi);
                }
                acc.finish()
            })
            .collect()
    }

    /// Sampled leaf potentials chi H_i / n^2, grouped by block.
    fn sampled_potentials(&self, grid: Grid) -> Vec<Vec<(&PotentialDescriptor, Vec<f64>)>> {
        let offsets: Vec<usize> = self
            .blocks
            .iter()
            .scan(0usize, |acc, b| {
                let o = *acc;
                *acc += b.leaves.len();
                Some(o)
            })
            .collect();
        let total: usize = self.blocks.iter().map(|b| b.leaves.len()).sum();
        let per_point: Vec<Vec<(usize, f64)>> = (0..grid.len())
            .into_par_iter()
            .map(|idx| {
                let x = grid.point(idx);
                let mut vals = Vec::new();
                self.walk(&x, |v| {
                    let n2 = v.block.freq * v.block.freq;
                    for (i, leaf) in v.block.leaves.iter().enumerate() {
                        if leaf.desc.is_some() {
                            vals.push((offsets[v.id] + i, v.chi * v.block.profile.eval(i, v.t)[0] / n2));
                        }
                    }
                });
                vals
            })
            .collect();
        let mut phis: Vec<Option<Vec<f64>>> = vec![None; total];
        for (idx, vals) in per_point.into_iter().enumerate() {
            for (k, val) in vals {
                phis[k].get_or_insert_with(|| vec![0.0; grid.len()])[idx] = val;
            }
        }
        self.blocks
            .iter()
            .enumerate()
            .map(|(b, blk)| {
                blk.leaves
                    .iter()
                    .enumerate()
                    .filter_map(|(i, leaf)| Some((leaf.desc.as_ref()?, phis[offsets[b] + i].take()?)))
                    .collect()
            })
            .collect()
    }

    /// A priori sup bound for the deviation of the perturbation from its
    /// profile term, summed over blocks.
    pub fn deviation_bound(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| {
                let k = (self.root_region.len() + b.own.len() + 4) as f64;
                let g = 2.0 * k * 1.875 / b.margin;
                let h = k * 5.78 / (b.margin * b.margin) + g * g;
                b.leaves
                    .iter()
                    .zip(&b.bounds)
                    .map(|(l, (hb, h1b))| {
                        l.desc.as_ref().map_or(0.0, |desc| {
                            desc.operator_norm() * (2.0 * g * h1b / b.freq + h * hb / (b.freq * b.freq))
                        })
                    })
                    .sum::<f64>()
            })
            .sum()
    }

    /// Allowed segments: for every realized split, the segment through the
    /// parent between its two children; with merged blocks, the segments
    /// joining the block root to each leaf and consecutive leaves.
    pub(crate) fn segments(&self, lam: &Laminate) -> Vec<(StateVector, StateVector)> {
        let mut out = Vec::new();
        for sp in lam.splits() {
            out.push((lam.nodes()[sp.children[0]].state.clone(), lam.nodes()[sp.children[1]].state.clone()));
        }
        for b in &self.blocks {
            let root = &lam.nodes()[b.node].state;
            let k = b.leaves.len();
            for i in 0..k {
                out.push((root.clone(), b.leaves[i].state.clone()));
                out.push((b.leaves[i].state.clone(), b.leaves[(i + 1) % k].state.clone()));
            }
        }
        out
    }

    /// Measures, on `points`, the fraction of closed-form values within
    /// `radius` of each target and the largest distance to `segments`.
    pub fn measure(
        &self,
        points: &[Vec<f64>],
        targets: &[StateVector],
        radius: f64,
        segments: &[(StateVector, StateVector)],
    ) -> Measurement {
        let per: Vec<(Vec<bool>, f64)> = points
            .par_iter()
            .map(|x| {
                let (w, _) = self.evaluate(x);
                let hits = targets.iter().map(|t| w.distance(t) < radius).collect();
                let dev = segments.iter().map(|(a, b)| segment_distance(&w, a, b)).fold(f64::INFINITY, f64::min);
                (hits, if segments.is_empty() { 0.0 } else { dev })
            })
            .collect();
        let n = points.len().max(1) as f64;
        let mut fractions = vec![0.0; targets.len()];
        let mut max_deviation = 0.0f64;
        for (hits, dev) in &per {
            for (f, h) in fractions.iter_mut().zip(hits) {
                if *h {
                    *f += 1.0 / n;
                }
            }
            max_deviation = max_deviation.max(*dev);
        }
        Measurement { fractions, max_deviation, samples: points.len() }
    }
}

/// Euclidean distance from w to the segment [a, b].
pub fn segment_distance(w: &StateVector, a: &StateVector, b: &StateVector) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(&ab);
    if len2 == 0.0 {
        return w.distance(a);
    }
    let t = ((w - a).dot(&ab) / len2).clamp(0.0, 1.0);
    w.distance(&a.lerp(b, 1.0 - t))
}

/// Random sample points in [0, 1]^d plus one jittered point in each cell of
/// a lattice with `lattice` cells per axis. Jittering keeps the lattice part
/// from locking onto oscillations whose period divides the lattice spacing.
pub fn sample_points(d: usize, count: usize, lattice: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut g = rng::seeded(seed);
    let mut pts: Vec<Vec<f64>> = (0..count).map(|_| (0..d).map(|_| g.random::<f64>()).collect()).collect();
    let total = lattice.pow(d as u32);
    for idx in 0..total {
        let mut x = vec![0.0; d];
        let mut r = idx;
        for a in (0..d).rev() {
            x[a] = ((r % lattice) as f64 + g.random::<f64>()) / lattice as f64;
            r /= lattice;
        }
        pts.push(x);
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laminate::decompose_vr;
    use crate::state::SlicePoint;

    fn cube(d: usize) -> Vec<Slab> {
        (0..d).map(|j| Slab { normal: unit(d, j), lo: 0.0, hi: 1.0 }).collect()
    }

    #[test]
    fn plateau_values_are_exact_inside_the_cutoff() {
        let lam = decompose_vr(SlicePoint::new(0.0, 0.0, 0.0), 1.0).unwrap();
        let opts = RealizeOptions { period: vec![Scale::Relative(0.25)], ..Default::default() };
        let real = Realization::new(&lam, cube(2), &opts).unwrap();
        assert!(real.truncated().is_empty());
        let atoms: Vec<StateVector> = lam.atoms().iter().map(|a| a.state.clone()).collect();
        let pts = sample_points(2, 20000, 0, 5);
        let m = real.measure(&pts, &atoms, 1e-9, &[]);
        let total: f64 = m.fractions.iter().sum();
        assert!(total > 0.3, "{:?}", m.fractions);
    }

    #[test]
    fn grid_and_closed_form_agree_when_resolved() {
        let lam = decompose_vr(SlicePoint::new(0.3, 0.0, 0.0), 1.0).unwrap();
        let opts = RealizeOptions {
            period: vec![Scale::Relative(0.5)],
            transition: 0.08,
            margin: Scale::Relative(0.2),
            max_depth: 1,
            ..Default::default()
        };
        let real = Realization::new(&lam, cube(2), &opts).unwrap();
        let grid = Grid::new(2, 128);
        let (comps, q) = real.perturbation_on_grid(grid);
        let mut err = 0.0f64;
        for idx in (0..grid.len()).step_by(7) {
            let p = real.perturbation(&grid.point(idx));
            for c in 0..comps.len() {
                err = err.max((comps[c][idx] - p[c]).abs());
            }
            err = err.max((q[idx] - p[comps.len()]).abs());
        }
        assert!(err < 1e-2, "{err}");
    }

    #[test]
    fn merged_blocks_fold_same_direction_splits() {
        let lam = decompose_vr(SlicePoint::new(0.0, 0.0, 0.0), 1.0).unwrap();
        let opts = RealizeOptions { merge: true, ..Default::default() };
        let real = Realization::new(&lam, Vec::new(), &opts).unwrap();
        // root and the two corner splits share eta = e2; the two bottom
        // splits oscillate along e1
        assert_eq!(real.blocks[0].leaves.len(), 4);
        assert_eq!(real.block_count(), 3);
        assert_eq!(real.blocks[0].freq, real.blocks[0].freq.round());
    }

    #[test]
    fn dirac_gives_zero_perturbation() {
        let lam = Laminate::dirac(SlicePoint::new(1.0, 0.0, 0.5).embed(), 1.0);
        let real = Realization::new(&lam, cube(2), &RealizeOptions::default()).unwrap();
        assert_eq!(real.block_count(), 0);
        assert!(real.perturbation(&[0.3, 0.4]).iter().all(|&x| x == 0.0));
    }
}
