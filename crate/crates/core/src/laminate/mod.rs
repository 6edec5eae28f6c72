//! Finite-order laminates: atomic probability measures on state space built
//! by repeated splitting along wave-cone segments.

mod hull;
mod lam1;
mod slice;

pub use hull::{lc_hull_slice, HullGridSpec, OccupancyGrid};
pub use lam1::{read_lam1, write_lam1};
pub use slice::{
    certify_by_rotation, decompose_ur, decompose_vr, f_r_eval, in_closure, split_certificate,
    UrCertificate,
};

use crate::error::{Error, Result};
use crate::state::{wave_cone_witness, wave_cone_witness_with, StateVector, WitnessOptions};

/// Absolute tolerance for segment and merge tests, relative to unit scale.
pub const SEGMENT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub weight: f64,
    pub state: StateVector,
}

/// A node of the provenance tree.
#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub state: StateVector,
    pub weight: f64,
    pub parent: Option<usize>,
    /// Index into `Laminate::splits` when this node has been split.
    pub split: Option<usize>,
}

/// One splitting step: the parent node state equals lambda*z1 + (1-lambda)*z2,
/// with z1, z2 the states of the two child nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitRecord {
    pub parent: usize,
    pub children: [usize; 2],
    pub lambda: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Laminate {
    level: f64,
    nodes: Vec<Node>,
    splits: Vec<SplitRecord>,
    atoms: Vec<Atom>,
}

impl Laminate {
    /// The Dirac mass at `w`. `level` is the energy level the laminate is meant
    /// to be supported on; it is metadata only.
    pub fn dirac(w: StateVector, level: f64) -> Self {
        let node = Node { state: w.clone(), weight: 1.0, parent: None, split: None };
        Self { level, nodes: vec![node], splits: Vec::new(), atoms: vec![Atom { weight: 1.0, state: w }] }
    }

    pub fn d(&self) -> usize {
        self.nodes[0].state.d()
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn set_level(&mut self, r: f64) {
        self.level = r;
    }

    pub fn root(&self) -> &StateVector {
        &self.nodes[0].state
    }

    /// Leaf measure with coinciding states merged, in order of first appearance.
    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn splits(&self) -> &[SplitRecord] {
        &self.splits
    }

    pub fn leaves(&self) -> impl Iterator<Item = (usize, &Node)> {
        self.nodes.iter().enumerate().filter(|(_, n)| n.split.is_none())
    }

    /// Depth of the provenance tree.
    pub fn order(&self) -> usize {
        let mut depth = vec![0usize; self.nodes.len()];
        let mut best = 0;
        for (i, n) in self.nodes.iter().enumerate() {
            if let Some(p) = n.parent {
                depth[i] = depth[p] + 1;
                best = best.max(depth[i]);
            }
        }
        best
    }

    pub fn total_weight(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    /// Replaces atom `idx` by lambda*delta_{z1} + (1-lambda)*delta_{z2}, where
    /// lambda is determined by the atom's position on [z1, z2].
    pub fn split_atom(&self, idx: usize, z1: &StateVector, z2: &StateVector) -> Result<Laminate> {
        let atom = self
            .atoms
            .get(idx)
            .ok_or_else(|| Error::InvalidArgument(format!("atom index {idx} out of range")))?;
        let w = atom.state.clone();
        let targets: Vec<usize> = self
            .leaves()
            .filter(|(_, n)| same_state(&n.state, &w))
            .map(|(i, _)| i)
            .collect();
        let mut out = self.clone();
        for node in targets {
            out.split_node(node, z1.clone(), z2.clone())?;
        }
        Ok(out)
    }

    /// Splits a leaf node in place, validating the segment and the direction.
    pub(crate) fn split_node(&mut self, node: usize, z1: StateVector, z2: StateVector) -> Result<()> {
        let w = self.nodes[node].state.clone();
        if self.nodes[node].split.is_some() {
            return Err(Error::InvalidArgument(format!("node {node} is already split")));
        }
        let lambda = segment_parameter(&w, &z1, &z2)?;
        let dir = &z2 - &z1;
        if dir.norm() <= SEGMENT_TOL * scale_of(&[&z1, &z2]) {
            return Ok(());
        }
        match wave_cone_witness(&dir) {
            Ok(Some(_)) => {}
            _ => return Err(Error::NotLambdaDirection),
        }
        self.split_node_unchecked(node, z1, z2, lambda);
        self.check_barycenter()
    }

    pub(crate) fn split_node_unchecked(&mut self, node: usize, z1: StateVector, z2: StateVector, lambda: f64) {
        let weight = self.nodes[node].weight;
        let c1 = self.nodes.len();
        self.nodes.push(Node { state: z1, weight: weight * lambda, parent: Some(node), split: None });
        self.nodes.push(Node { state: z2, weight: weight * (1.0 - lambda), parent: Some(node), split: None });
        self.splits.push(SplitRecord { parent: node, children: [c1, c1 + 1], lambda });
        self.nodes[node].split = Some(self.splits.len() - 1);
        self.rebuild_atoms();
    }

    /// Attaches `sub` (whose root must coincide with the node state) below a
    /// leaf node, scaling its weights.
    pub(crate) fn graft(&mut self, node: usize, sub: &Laminate) -> Result<()> {
        if !same_state(&self.nodes[node].state, sub.root()) {
            return Err(Error::InvariantViolation("grafted laminate root does not match node".into()));
        }
        let offset = self.nodes.len() - 1;
        let weight = self.nodes[node].weight;
        let map = |i: usize| if i == 0 { node } else { i + offset };
        for n in sub.nodes.iter().skip(1) {
            self.nodes.push(Node {
                state: n.state.clone(),
                weight: weight * n.weight,
                parent: n.parent.map(map),
                split: None,
            });
        }
        for s in &sub.splits {
            self.splits.push(SplitRecord {
                parent: map(s.parent),
                children: [map(s.children[0]), map(s.children[1])],
                lambda: s.lambda,
            });
            let idx = self.splits.len() - 1;
            let p = map(s.parent);
            self.nodes[p].split = Some(idx);
        }
        self.rebuild_atoms();
        self.check_barycenter()
    }

    /// Applies a linear map to every state (node states and atoms).
    pub(crate) fn map_states(&mut self, f: impl Fn(&StateVector) -> StateVector) {
        for n in &mut self.nodes {
            n.state = f(&n.state);
        }
        self.rebuild_atoms();
    }

    fn rebuild_atoms(&mut self) {
        let mut atoms: Vec<Atom> = Vec::new();
        for (_, n) in self.leaves() {
            if let Some(a) = atoms.iter_mut().find(|a| same_state(&a.state, &n.state)) {
                a.weight += n.weight;
            } else {
                atoms.push(Atom { weight: n.weight, state: n.state.clone() });
            }
        }
        self.atoms = atoms;
    }

    pub(crate) fn from_parts(level: f64, nodes: Vec<Node>, splits: Vec<SplitRecord>) -> Result<Self> {
        let mut lam = Self { level, nodes, splits, atoms: Vec::new() };
        lam.rebuild_atoms();
        lam.validate()?;
        Ok(lam)
    }

    /// Checks weights, barycenter and every split record.
    pub fn validate(&self) -> Result<()> {
        self.validate_with(WitnessOptions::default())
    }

    pub(crate) fn validate_with(&self, opts: WitnessOptions) -> Result<()> {
        let total = self.total_weight();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvariantViolation(format!("weights sum to {total}")));
        }
        if self.atoms.iter().any(|a| a.weight < 0.0) {
            return Err(Error::InvariantViolation("negative weight".into()));
        }
        for s in &self.splits {
            let w = &self.nodes[s.parent].state;
            let z1 = &self.nodes[s.children[0]].state;
            let z2 = &self.nodes[s.children[1]].state;
            if !(0.0..=1.0).contains(&s.lambda) {
                return Err(Error::InvariantViolation(format!("lambda {} outside [0,1]", s.lambda)));
            }
            let off = w.distance(&z1.lerp(z2, s.lambda));
            if off > SEGMENT_TOL * scale_of(&[w, z1, z2]) {
                return Err(Error::NotOnSegment { offset: off });
            }
            if !matches!(wave_cone_witness_with(&(z2 - z1), opts), Ok(Some(_))) {
                return Err(Error::NotLambdaDirection);
            }
        }
        self.check_barycenter()
    }

    fn check_barycenter(&self) -> Result<()> {
        let (bary, _) = measure_stats(self, self.root());
        let err = bary.distance(self.root());
        let scale = self.atoms.iter().fold(1.0f64, |m, a| m.max(a.state.norm()));
        if err > SEGMENT_TOL * scale {
            return Err(Error::InvariantViolation(format!("barycenter drift {err:e}")));
        }
        Ok(())
    }
}

/// Barycenter and second moment about `w0`.
pub fn measure_stats(lam: &Laminate, w0: &StateVector) -> (StateVector, f64) {
    let mut bary = StateVector::zeros(w0.d());
    let mut second = 0.0;
    for a in lam.atoms() {
        bary = bary.axpy(a.weight, &a.state);
        second += a.weight * a.state.distance(w0).powi(2);
    }
    (bary, second)
}

fn scale_of(states: &[&StateVector]) -> f64 {
    states.iter().fold(1.0f64, |m, s| m.max(s.norm()))
}

pub(crate) fn same_state(a: &StateVector, b: &StateVector) -> bool {
    a.distance(b) <= SEGMENT_TOL * scale_of(&[a, b])
}

/// lambda with w = lambda*z1 + (1-lambda)*z2, or NotOnSegment.
fn segment_parameter(w: &StateVector, z1: &StateVector, z2: &StateVector) -> Result<f64> {
    let tol = SEGMENT_TOL * scale_of(&[w, z1, z2]);
    let dir = z1 - z2;
    let len2 = dir.dot(&dir);
    if len2.sqrt() <= tol {
        let off = w.distance(z1);
        return if off <= tol { Ok(1.0) } else { Err(Error::NotOnSegment { offset: off }) };
    }
    let lambda = (w - z2).dot(&dir) / len2;
    let off = w.distance(&z1.lerp(z2, lambda));
    let slack = tol / len2.sqrt();
    if off > tol || lambda < -slack || lambda > 1.0 + slack {
        return Err(Error::NotOnSegment { offset: off.max(lambda.abs().min((lambda - 1.0).abs())) });
    }
    Ok(lambda.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{ComplexState, SlicePoint};
    use num_complex::Complex64;

    #[test]
    fn symmetric_split_keeps_barycenter() {
        let wbar = SlicePoint::new(1.0, 0.0, 0.0).embed();
        let lam = Laminate::dirac(StateVector::zeros(2), 1.0);
        let out = lam.split_atom(0, &(-&wbar), &wbar).unwrap();
        assert_eq!(out.atoms().len(), 2);
        let (bary, second) = measure_stats(&out, &StateVector::zeros(2));
        assert!(bary.norm() < 1e-15);
        assert!((second - 1.0).abs() < 1e-15);
        assert_eq!(out.order(), 1);
    }

    #[test]
    fn endpoint_split_moves_all_weight() {
        let z2 = SlicePoint::new(1.0, 0.0, 0.0).embed();
        let lam = Laminate::dirac(z2.clone(), 1.0);
        let out = lam.split_atom(0, &(-&z2), &z2).unwrap();
        let heavy = out.atoms().iter().find(|a| same_state(&a.state, &z2)).unwrap();
        assert_eq!(heavy.weight, 1.0);
    }

    #[test]
    fn rejects_bad_splits() {
        let lam = Laminate::dirac(StateVector::zeros(2), 1.0);
        let half = ComplexState::new(Complex64::new(0.5, -0.5), Complex64::new(0.5, 0.0)).to_state();
        let err = lam.split_atom(0, &(-&half), &half).unwrap_err();
        assert_eq!(err, Error::NotLambdaDirection);
        let a = SlicePoint::new(1.0, 0.0, 0.0).embed();
        let b = SlicePoint::new(2.0, 0.0, 0.0).embed();
        assert!(matches!(lam.split_atom(0, &a, &b), Err(Error::NotOnSegment { .. })));
    }

    #[test]
    fn dirac_stats() {
        let w = SlicePoint::new(0.2, 0.1, 0.0).embed();
        let lam = Laminate::dirac(w.clone(), 1.0);
        let (b, s) = measure_stats(&lam, &w);
        assert_eq!(b, w);
        assert_eq!(s, 0.0);
    }
}
