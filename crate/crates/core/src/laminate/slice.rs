//! Explicit laminate decompositions in the slice {Im zeta = 0} and their
//! rotations.

use std::f64::consts::FRAC_PI_2;

use super::{Laminate, SEGMENT_TOL};
use crate::error::{Error, Result};
use crate::state::{check_level, symmetry_apply, wave_cone_witness, ComplexState, EnergyLevel, SlicePoint, StateVector};

/// sqrt(r)|a|/(r/2 + c) + sqrt(r)|b|/(r/2 - c); the open slice region is
/// {f < 1, |c| < r/2}.
pub fn f_r_eval(p: SlicePoint, r: f64) -> Result<f64> {
    check_level(r)?;
    let h = 0.5 * r;
    if p.c.abs() >= h {
        return Err(Error::SliceOutOfRange { c: p.c, r });
    }
    let s = r.sqrt();
    Ok(s * p.a.abs() / (h + p.c) + s * p.b.abs() / (h - p.c))
}

/// Membership in the closed slice region: {f <= 1, |c| < r/2} together with
/// the two segments {|a| <= sqrt(r), b = 0, c = r/2} and
/// {a = 0, |b| <= sqrt(r), c = -r/2}. Tolerance 1e-12 in normalized units.
pub fn in_closure(p: SlicePoint, r: f64) -> bool {
    classify(normalize(p, r)).is_ok()
}

/// Closed-region membership without tolerance, used when choosing a level
/// strictly below the generator's own level.
fn in_closure_strict(p: SlicePoint, r: f64) -> bool {
    let h = 0.5 * r;
    let s = r.sqrt();
    if p.c == h {
        p.b == 0.0 && p.a.abs() <= s
    } else if p.c == -h {
        p.a == 0.0 && p.b.abs() <= s
    } else {
        p.c.abs() < h && f_r_eval(p, r).is_ok_and(|f| f <= 1.0)
    }
}

fn normalize(p: SlicePoint, r: f64) -> SlicePoint {
    let s = r.sqrt();
    SlicePoint::new(p.a / s, p.b / s, p.c / r)
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Region {
    Top,
    Bottom,
    Boundary,
    Interior,
}

fn classify(p: SlicePoint) -> std::result::Result<Region, ()> {
    let tol = SEGMENT_TOL;
    if (p.c - 0.5).abs() <= tol {
        return if p.b.abs() <= tol && p.a.abs() <= 1.0 + tol { Ok(Region::Top) } else { Err(()) };
    }
    if (p.c + 0.5).abs() <= tol {
        return if p.a.abs() <= tol && p.b.abs() <= 1.0 + tol { Ok(Region::Bottom) } else { Err(()) };
    }
    if p.c.abs() > 0.5 {
        return Err(());
    }
    let f = p.a.abs() / (0.5 + p.c) + p.b.abs() / (0.5 - p.c);
    if f > 1.0 + tol {
        Err(())
    } else if f >= 1.0 - tol {
        Ok(Region::Boundary)
    } else {
        Ok(Region::Interior)
    }
}

const VERTICES: [[f64; 3]; 4] = [[1.0, 0.0, 0.5], [-1.0, 0.0, 0.5], [0.0, 1.0, -0.5], [0.0, -1.0, -0.5]];

fn sign(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// One splitting step in normalized coordinates (level 1): returns
/// (z1, z2, lambda) with p = lambda*z1 + (1-lambda)*z2, or None at a vertex.
fn next_split(p: SlicePoint) -> Option<(SlicePoint, SlicePoint, f64)> {
    for v in VERTICES {
        if p.distance(SlicePoint::new(v[0], v[1], v[2])) <= SEGMENT_TOL {
            return None;
        }
    }
    let region = classify(p).expect("point checked before decomposition");
    match region {
        Region::Top => {
            // segment between (-1, 0, 1/2) and (1, 0, 1/2)
            let lambda = (1.0 - p.a) / 2.0;
            Some((SlicePoint::new(-1.0, 0.0, 0.5), SlicePoint::new(1.0, 0.0, 0.5), lambda))
        }
        Region::Bottom => {
            let lambda = (1.0 - p.b) / 2.0;
            Some((SlicePoint::new(0.0, -1.0, -0.5), SlicePoint::new(0.0, 1.0, -0.5), lambda))
        }
        Region::Boundary => {
            let (sa, sb) = (sign(p.a), sign(p.b));
            let wa = 0.5 + p.c;
            let wb = 0.5 - p.c;
            let mu = (p.a.abs() / wa).clamp(0.0, 1.0);
            if 1.0 - mu <= SEGMENT_TOL {
                // on the a-corner: segment to the vertex (sa, 0, 1/2) and the axis point (0, 0, -1/2)
                Some((SlicePoint::new(sa, 0.0, 0.5), SlicePoint::new(0.0, 0.0, -0.5), wa))
            } else if mu <= SEGMENT_TOL {
                Some((SlicePoint::new(0.0, sb, -0.5), SlicePoint::new(0.0, 0.0, 0.5), wb))
            } else {
                Some((SlicePoint::new(sa * wa, 0.0, p.c), SlicePoint::new(0.0, sb * wb, p.c), mu))
            }
        }
        Region::Interior => {
            let wa = 0.5 + p.c;
            let wb = 0.5 - p.c;
            let (ra, rb) = (p.a.abs() / wa, p.b.abs() / wb);
            if ra >= rb {
                let reach = wa * (1.0 - rb);
                let lambda = (1.0 - p.a / reach) / 2.0;
                Some((SlicePoint::new(-reach, p.b, p.c), SlicePoint::new(reach, p.b, p.c), lambda))
            } else {
                let reach = wb * (1.0 - ra);
                let lambda = (1.0 - p.b / reach) / 2.0;
                Some((SlicePoint::new(p.a, -reach, p.c), SlicePoint::new(p.a, reach, p.c), lambda))
            }
        }
    }
}

/// Laminate of order at most four with barycenter `p`, supported on the four
/// points of the constraint set at level r inside the slice.
pub fn decompose_vr(p: SlicePoint, r: f64) -> Result<Laminate> {
    check_level(r)?;
    let unit = normalize(p, r);
    if classify(unit).is_err() {
        return Err(Error::NotInClosure { a: p.a, b: p.b, c: p.c, r });
    }
    let s = r.sqrt();
    let scale = |q: SlicePoint| SlicePoint::new(q.a * s, q.b * s, q.c * r).embed();
    let mut lam = Laminate::dirac(p.embed(), r);
    let mut stack = vec![(0usize, unit)];
    while let Some((node, q)) = stack.pop() {
        if let Some((z1, z2, lambda)) = next_split(q) {
            let first = lam.nodes().len();
            lam.split_node_unchecked(node, scale(z1), scale(z2), lambda);
            stack.push((first + 1, z2));
            stack.push((first, z1));
        }
    }
    lam.validate()?;
    Ok(lam)
}

/// Provenance of a point of the rotated slice region: either a rotated slice
/// point, or a recorded split of two certified points.
#[derive(Clone, Debug, PartialEq)]
pub enum UrCertificate {
    /// The state equals symmetry_apply(embed(point), theta, conj).
    Slice { point: SlicePoint, theta: f64, conj: bool },
    /// The state equals lambda*first + (1-lambda)*second.
    Split { lambda: f64, first: Box<UrCertificate>, second: Box<UrCertificate> },
}

impl UrCertificate {
    pub fn state(&self) -> StateVector {
        match self {
            UrCertificate::Slice { point, theta, conj } => {
                symmetry_apply(&point.embed(), *theta, *conj).expect("planar state")
            }
            UrCertificate::Split { lambda, first, second } => first.state().lerp(&second.state(), *lambda),
        }
    }

    fn generators_fit(&self, r: f64) -> bool {
        match self {
            UrCertificate::Slice { point, .. } => in_closure_strict(*point, r),
            UrCertificate::Split { first, second, .. } => first.generators_fit(r) && second.generators_fit(r),
        }
    }

    fn build(&self, r: f64) -> Result<Laminate> {
        match self {
            UrCertificate::Slice { point, theta, conj } => {
                let mut lam = decompose_vr(*point, r)?;
                let (theta, conj) = (*theta, *conj);
                lam.map_states(|w| symmetry_apply(w, theta, conj).expect("planar state"));
                Ok(lam)
            }
            UrCertificate::Split { lambda, first, second } => {
                let a = first.build(r)?;
                let b = second.build(r)?;
                let mut lam = Laminate::dirac(self.state(), r);
                lam.split_node(0, a.root().clone(), b.root().clone())?;
                let [c1, c2] = lam.splits()[0].children;
                // the recorded weight must match the certificate's split
                if (lam.splits()[0].lambda - lambda).abs() > 1e-9 {
                    return Err(Error::InvariantViolation("certificate split weight mismatch".into()));
                }
                lam.graft(c1, &a)?;
                lam.graft(c2, &b)?;
                Ok(lam)
            }
        }
    }
}

/// Certifies a planar state by rotating it into the slice: returns a
/// certificate if the rotated point lies in the open slice region at level r.
pub fn certify_by_rotation(w: &StateVector, r: f64) -> Option<UrCertificate> {
    let cs = ComplexState::from_state(w).ok()?;
    let base = if cs.zeta.norm() > 0.0 { -0.5 * cs.zeta.arg() } else { -cs.z.arg() };
    let mut best: Option<(f64, UrCertificate)> = None;
    for shift in [0.0, FRAC_PI_2] {
        let phi = base + shift;
        let rotated = symmetry_apply(w, phi, false).ok()?;
        let p = SlicePoint::new(rotated.coords()[0], rotated.coords()[1], rotated.coords()[2]);
        if let Ok(f) = f_r_eval(p, r) {
            if f < 1.0 && best.as_ref().is_none_or(|(g, _)| f < *g) {
                let point = SlicePoint::new(p.a, p.b, p.c);
                best = Some((f, UrCertificate::Slice { point, theta: -phi, conj: false }));
            }
        }
    }
    best.map(|(_, c)| c)
}

/// Laminate with barycenter the certified state, supported on the constraint
/// set at a level r' in (r - eps, r): the largest r' = r - eps 2^-k,
/// k = 1..40, at which every slice generator lies in the closed region.
pub fn decompose_ur(cert: &UrCertificate, r: f64, eps: f64) -> Result<(EnergyLevel, Laminate)> {
    check_level(r)?;
    if !(eps > 0.0 && eps < r) {
        return Err(Error::InvalidArgument(format!("epsilon {eps} must lie in (0, r)")));
    }
    let target = cert.state();
    for k in (1..=40).rev() {
        let level = r - eps * 0.5f64.powi(k);
        if !cert.generators_fit(level) {
            continue;
        }
        let lam = cert.build(level)?;
        let drift = lam.root().distance(&target);
        if drift > SEGMENT_TOL * target.norm().max(1.0) {
            return Err(Error::InvariantViolation(format!("rotated laminate root drift {drift:e}")));
        }
        return Ok((EnergyLevel::new(level)?, lam));
    }
    Err(Error::EpsilonTooSmall { r, eps })
}

/// Checks that a direction joining two certified points is admissible for a
/// split certificate.
pub fn split_certificate(lambda: f64, first: UrCertificate, second: UrCertificate) -> Result<UrCertificate> {
    let dir = &second.state() - &first.state();
    if !matches!(wave_cone_witness(&dir), Ok(Some(_))) {
        return Err(Error::NotLambdaDirection);
    }
    Ok(UrCertificate::Split { lambda, first: Box::new(first), second: Box::new(second) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laminate::measure_stats;

    fn weight_at(lam: &Laminate, p: [f64; 3]) -> f64 {
        let target = SlicePoint::new(p[0], p[1], p[2]).embed();
        lam.atoms().iter().filter(|a| a.state.distance(&target) < 1e-12).map(|a| a.weight).sum()
    }

    #[test]
    fn f_r_examples() {
        assert_eq!(f_r_eval(SlicePoint::new(0.0, 0.0, 0.3), 1.0).unwrap(), 0.0);
        assert_eq!(f_r_eval(SlicePoint::new(0.25, 0.0, 0.0), 1.0).unwrap(), 0.5);
        assert_eq!(f_r_eval(SlicePoint::new(0.5, 0.0, 0.0), 1.0).unwrap(), 1.0);
        assert!(matches!(f_r_eval(SlicePoint::new(0.0, 0.0, 0.5), 1.0), Err(Error::SliceOutOfRange { .. })));
    }

    #[test]
    fn centre_gives_quarter_weights() {
        let lam = decompose_vr(SlicePoint::new(0.0, 0.0, 0.0), 1.0).unwrap();
        assert_eq!(lam.atoms().len(), 4);
        for v in VERTICES {
            assert_eq!(weight_at(&lam, v), 0.25);
        }
        assert!(lam.order() <= 4);
    }

    #[test]
    fn vertex_is_dirac() {
        let lam = decompose_vr(SlicePoint::new(1.0, 0.0, 0.5), 1.0).unwrap();
        assert_eq!(lam.atoms().len(), 1);
        assert_eq!(lam.order(), 0);
    }

    #[test]
    fn boundary_example() {
        let lam = decompose_vr(SlicePoint::new(0.75, 0.0, 0.25), 1.0).unwrap();
        assert_eq!(lam.atoms().len(), 3);
        assert_eq!(weight_at(&lam, [1.0, 0.0, 0.5]), 0.75);
        assert_eq!(weight_at(&lam, [0.0, 1.0, -0.5]), 0.125);
        assert_eq!(weight_at(&lam, [0.0, -1.0, -0.5]), 0.125);
    }

    #[test]
    fn outside_is_rejected() {
        let err = decompose_vr(SlicePoint::new(0.6, 0.0, 0.0), 1.0).unwrap_err();
        assert!(matches!(err, Error::NotInClosure { .. }));
        assert!(decompose_vr(SlicePoint::new(0.1, 0.1, 0.5), 1.0).is_err());
    }

    #[test]
    fn scaled_level() {
        let lam = decompose_vr(SlicePoint::new(0.3, -0.4, 0.5), 4.0).unwrap();
        for a in lam.atoms() {
            assert!((a.state.speed_sq() - 4.0).abs() < 1e-12);
        }
        let (b, _) = measure_stats(&lam, lam.root());
        assert!(b.distance(&SlicePoint::new(0.3, -0.4, 0.5).embed()) < 1e-12);
    }

    #[test]
    fn ur_examples() {
        let cert = UrCertificate::Slice { point: SlicePoint::new(0.0, 0.0, 0.0), theta: 0.0, conj: false };
        let (level, lam) = decompose_ur(&cert, 1.0, 0.5).unwrap();
        assert!(level.value() < 1.0 && level.value() > 0.5);
        assert_eq!(lam.atoms().len(), 4);

        let cert = UrCertificate::Slice {
            point: SlicePoint::new(0.2, 0.0, 0.1),
            theta: std::f64::consts::FRAC_PI_4,
            conj: false,
        };
        let (level, lam) = decompose_ur(&cert, 1.0, 0.1).unwrap();
        for a in lam.atoms() {
            assert!((a.state.speed_sq() - level.value()).abs() < 1e-12);
        }
        let (b, _) = measure_stats(&lam, &cert.state());
        assert!(b.distance(&cert.state()) < 1e-12);

        let vertex = UrCertificate::Slice { point: SlicePoint::new(1.0, 0.0, 0.5), theta: 0.3, conj: false };
        assert!(matches!(decompose_ur(&vertex, 1.0, 0.01), Err(Error::EpsilonTooSmall { .. })));
    }

    #[test]
    fn rotation_certificate_recovers_state() {
        let p = SlicePoint::new(0.1, -0.2, 0.15);
        let w = symmetry_apply(&p.embed(), 1.1, false).unwrap();
        let cert = certify_by_rotation(&w, 1.0).unwrap();
        assert!(cert.state().distance(&w) < 1e-14);
        let far = SlicePoint::new(0.9, 0.0, 0.0).embed();
        assert!(certify_by_rotation(&far, 1.0).is_none());
    }

    #[test]
    fn split_certificates_replay() {
        let a = UrCertificate::Slice { point: SlicePoint::new(-0.2, 0.0, 0.0), theta: 0.0, conj: false };
        let b = UrCertificate::Slice { point: SlicePoint::new(0.2, 0.0, 0.0), theta: 0.0, conj: false };
        let cert = split_certificate(0.25, a, b).unwrap();
        let (level, lam) = decompose_ur(&cert, 1.0, 0.1).unwrap();
        let (bary, _) = measure_stats(&lam, lam.root());
        assert!(bary.distance(&cert.state()) < 1e-12);
        for atom in lam.atoms() {
            assert!((atom.state.speed_sq() - level.value()).abs() < 1e-12);
        }
    }
}
