//! Sampled subsolution fields and their FLD1 / CSV encodings.
//!
//! FLD1 layout:
//!
//! ```text
//! FLD1
//! d <dimension>
//! domain Q|T
//! n <points per axis>
//! components v1 .. vd u11 .. q
//! profile <id>
//! end
//! ```
//!
//! The header is followed by little-endian f64 data, one block of n^d values
//! per component in the listed order, each block row-major with the first
//! axis slowest. Grid point i along an axis sits at i/n.

use std::fmt;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::spectral::{self, Grid};
use crate::state::StateVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    /// Unit cube, zero-extended to the torus.
    Cube,
    Torus,
}

impl Domain {
    pub fn tag(self) -> &'static str {
        match self {
            Domain::Cube => "Q",
            Domain::Torus => "T",
        }
    }
}

/// Closed-form evaluation at a point of [0,1)^d: state and pressure.
pub type Evaluator = Arc<dyn Fn(&[f64]) -> (StateVector, f64) + Send + Sync>;

/// Grid samples of (v, u, q), plus an optional closed-form evaluator.
#[derive(Clone)]
pub struct SubsolutionField {
    grid: Grid,
    domain: Domain,
    /// One array per state coordinate.
    comps: Vec<Vec<f64>>,
    q: Vec<f64>,
    profile: String,
    evaluator: Option<Evaluator>,
}

impl fmt::Debug for SubsolutionField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SubsolutionField")
            .field("d", &self.grid.d)
            .field("n", &self.grid.n)
            .field("domain", &self.domain)
            .field("profile", &self.profile)
            .field("closed_form", &self.evaluator.is_some())
            .finish()
    }
}

impl PartialEq for SubsolutionField {
    fn eq(&self, o: &Self) -> bool {
        self.grid == o.grid && self.domain == o.domain && self.comps == o.comps && self.q == o.q && self.profile == o.profile
    }
}

pub fn component_names(d: usize) -> Vec<String> {
    let mut names: Vec<String> = (1..=d).map(|i| format!("v{i}")).collect();
    names.extend((1..d).map(|i| format!("u{i}{i}")));
    for i in 1..=d {
        for j in (i + 1)..=d {
            names.push(format!("u{i}{j}"));
        }
    }
    names.push("q".into());
    names
}

impl SubsolutionField {
    pub fn new(grid: Grid, domain: Domain, comps: Vec<Vec<f64>>, q: Vec<f64>, profile: &str) -> Result<Self> {
        if comps.len() != StateVector::dim_for(grid.d) || comps.iter().any(|c| c.len() != grid.len()) || q.len() != grid.len() {
            return Err(Error::DimensionError("field arrays do not match the grid".into()));
        }
        if profile.split_whitespace().count() != 1 {
            return Err(Error::InvalidArgument("profile id must be a single token".into()));
        }
        Ok(Self { grid, domain, comps, q, profile: profile.to_string(), evaluator: None })
    }

    pub fn zeros(grid: Grid, domain: Domain) -> Self {
        let dim = StateVector::dim_for(grid.d);
        Self {
            grid,
            domain,
            comps: vec![vec![0.0; grid.len()]; dim],
            q: vec![0.0; grid.len()],
            profile: "none".into(),
            evaluator: None,
        }
    }

    pub fn with_evaluator(mut self, eval: Evaluator) -> Self {
        self.evaluator = Some(eval);
        self
    }

    pub fn without_evaluator(mut self) -> Self {
        self.evaluator = None;
        self
    }

    pub fn with_profile(mut self, profile: &str) -> Self {
        self.profile = profile.split_whitespace().collect::<Vec<_>>().join("_");
        if self.profile.is_empty() {
            self.profile = "none".into();
        }
        self
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn d(&self) -> usize {
        self.grid.d
    }

    pub fn n(&self) -> usize {
        self.grid.n
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn profile(&self) -> &str {
        &self.profile
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.comps
    }

    pub fn components_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.comps
    }

    pub fn velocity(&self) -> &[Vec<f64>] {
        &self.comps[..self.grid.d]
    }

    pub fn pressure(&self) -> &[f64] {
        &self.q
    }

    pub fn pressure_mut(&mut self) -> &mut Vec<f64> {
        &mut self.q
    }

    pub fn evaluator(&self) -> Option<&Evaluator> {
        self.evaluator.as_ref()
    }

    /// Closed-form value at x, if available.
    pub fn evaluate(&self, x: &[f64]) -> Option<(StateVector, f64)> {
        self.evaluator.as_ref().map(|e| e(x))
    }

    pub fn state_at(&self, idx: usize) -> StateVector {
        let c = self.comps.iter().map(|a| a[idx]).collect();
        StateVector::from_coords(self.grid.d, c).expect("field dimension")
    }

    /// Full d x d stress arrays u_ij, row-major over (i, j).
    pub fn u_full(&self) -> Vec<Vec<f64>> {
        let d = self.grid.d;
        let len = self.grid.len();
        let uc = &self.comps[d..];
        let mut out = vec![vec![0.0; len]; d * d];
        for i in 0..d - 1 {
            out[i * d + i] = uc[i].clone();
            for p in 0..len {
                out[d * d - 1][p] -= uc[i][p];
            }
        }
        let mut k = d - 1;
        for i in 0..d {
            for j in (i + 1)..d {
                out[i * d + j] = uc[k].clone();
                out[j * d + i] = uc[k].clone();
                k += 1;
            }
        }
        out
    }

    /// Divergence and momentum residuals in H^{-1}.
    pub fn weak_residuals(&self) -> (f64, f64) {
        let v: Vec<&[f64]> = self.velocity().iter().map(|x| x.as_slice()).collect();
        spectral::weak_residuals(self.grid, &v, &self.u_full(), &self.q)
    }

    /// L^2 norm of all components including q.
    pub fn l2_norm(&self) -> f64 {
        let mut all: Vec<&[f64]> = self.comps.iter().map(|x| x.as_slice()).collect();
        all.push(&self.q);
        spectral::l2_norm(self.grid, &all)
    }

    pub fn sup_norm(&self) -> f64 {
        (0..self.grid.len()).map(|i| self.state_at(i).norm()).fold(0.0, f64::max)
    }

    /// self += s * other, arrays only (the evaluator is dropped).
    pub fn add_scaled(&mut self, s: f64, other: &SubsolutionField) {
        assert_eq!(self.grid, other.grid);
        for (a, b) in self.comps.iter_mut().zip(&other.comps) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += s * y;
            }
        }
        for (x, y) in self.q.iter_mut().zip(&other.q) {
            *x += s * y;
        }
        self.evaluator = None;
    }
}

pub fn write_fld1(f: &SubsolutionField) -> Vec<u8> {
    let mut head = String::new();
    head.push_str("FLD1\n");
    let _ = writeln!(head, "d {}", f.d());
    let _ = writeln!(head, "domain {}", f.domain.tag());
    let _ = writeln!(head, "n {}", f.n());
    let _ = writeln!(head, "components {}", component_names(f.d()).join(" "));
    let _ = writeln!(head, "profile {}", f.profile);
    head.push_str("end\n");
    let mut out = head.into_bytes();
    for block in f.comps.iter().chain(std::iter::once(&f.q)) {
        for x in block {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

fn header_line<'a>(lines: &mut impl Iterator<Item = &'a str>, key: &str) -> Result<Vec<&'a str>> {
    let line = lines.next().ok_or_else(|| Error::Parse(format!("FLD1 header ends before '{key}'")))?;
    let f: Vec<&str> = line.split_whitespace().collect();
    if f.first() != Some(&key) {
        return Err(Error::Parse(format!("expected '{key}' in FLD1 header, found '{line}'")));
    }
    Ok(f[1..].to_vec())
}

pub fn read_fld1(bytes: &[u8]) -> Result<SubsolutionField> {
    let marker = b"\nend\n";
    let pos = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| Error::Parse("FLD1 header has no 'end' line".into()))?;
    let head = std::str::from_utf8(&bytes[..pos]).map_err(|_| Error::Parse("FLD1 header is not UTF-8".into()))?;
    let body = &bytes[pos + marker.len()..];
    let mut lines = head.lines();
    if lines.next() != Some("FLD1") {
        return Err(Error::Parse("missing FLD1 magic".into()));
    }
    let one = |v: Vec<&str>, key: &str| -> Result<String> {
        if v.len() != 1 {
            return Err(Error::Parse(format!("'{key}' takes one value")));
        }
        Ok(v[0].to_string())
    };
    let d: usize = one(header_line(&mut lines, "d")?, "d")?.parse().map_err(|_| Error::Parse("bad d".into()))?;
    let domain = match one(header_line(&mut lines, "domain")?, "domain")?.as_str() {
        "Q" => Domain::Cube,
        "T" => Domain::Torus,
        other => return Err(Error::Parse(format!("unknown domain tag '{other}'"))),
    };
    let n: usize = one(header_line(&mut lines, "n")?, "n")?.parse().map_err(|_| Error::Parse("bad n".into()))?;
    if !(2..=4).contains(&d) || n < 2 {
        return Err(Error::Parse(format!("unsupported grid d = {d}, n = {n}")));
    }
    let names = header_line(&mut lines, "components")?;
    if names != component_names(d) {
        return Err(Error::Parse("component list does not match dimension".into()));
    }
    let profile = one(header_line(&mut lines, "profile")?, "profile")?;
    if lines.next().is_some() {
        return Err(Error::Parse("unexpected FLD1 header line".into()));
    }
    let grid = Grid::new(d, n);
    let len = grid.len();
    if body.len() != 8 * len * names.len() {
        return Err(Error::Parse(format!("FLD1 body has {} bytes, expected {}", body.len(), 8 * len * names.len())));
    }
    let mut blocks: Vec<Vec<f64>> = body
        .chunks_exact(8 * len)
        .map(|b| b.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
        .collect();
    let q = blocks.pop().unwrap_or_default();
    SubsolutionField::new(grid, domain, blocks, q, &profile)
}

/// CSV with one row per grid point: coordinates, then the components.
pub fn write_csv(f: &SubsolutionField) -> String {
    let d = f.d();
    let mut s = String::new();
    let mut head: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    head.extend(component_names(d));
    s.push_str(&head.join(","));
    s.push('\n');
    for idx in 0..f.grid.len() {
        let mut row: Vec<String> = f.grid.point(idx).iter().map(|x| format!("{x}")).collect();
        row.extend(f.comps.iter().map(|c| format!("{:e}", c[idx])));
        row.push(format!("{:e}", f.q[idx]));
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SubsolutionField {
        let g = Grid::new(2, 4);
        let comps = (0..4).map(|c| (0..16).map(|i| (c * 16 + i) as f64 * 0.1 - 1.0).collect()).collect();
        SubsolutionField::new(g, Domain::Cube, comps, vec![0.5; 16], "const:1").unwrap()
    }

    #[test]
    fn fld1_round_trip() {
        let f = sample();
        let bytes = write_fld1(&f);
        assert_eq!(read_fld1(&bytes).unwrap(), f);
    }

    #[test]
    fn fld1_rejects_truncation_and_bad_headers() {
        let bytes = write_fld1(&sample());
        assert!(read_fld1(&bytes[..bytes.len() - 1]).is_err());
        let text = String::from_utf8_lossy(&bytes).replace("domain Q", "domain X");
        assert!(read_fld1(text.as_bytes()).is_err());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let s = write_csv(&sample());
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "x1,x2,v1,v2,u11,u12,q");
        assert_eq!(lines.len(), 17);
    }

    #[test]
    fn u_full_is_trace_free() {
        let f = sample();
        let u = f.u_full();
        for p in 0..16 {
            assert!((u[0][p] + u[3][p]).abs() < 1e-15);
            assert_eq!(u[1][p], u[2][p]);
        }
    }
}
