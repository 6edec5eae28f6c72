//! LAM1: line-oriented text serialization of laminates.
//!
//! ```text
//! LAM1
//! d <dimension> r <level>
//! atoms <count>
//! <weight> <state coordinates...>
//! nodes <count>
//! <parent index or -> <weight> <state coordinates...>
//! splits <count>
//! <parent> <child1> <child2> <lambda>
//! end
//! ```
//!
//! Floats carry 17 significant digits so a write/read cycle is bit-exact.
//! The atom block is the merged leaf measure and is checked against the
//! node tree on reading.

use std::fmt::Write as _;

use super::{Laminate, Node, SplitRecord};
use crate::error::{Error, Result};
use crate::state::StateVector;

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn coords(w: &StateVector) -> String {
    w.coords().iter().map(|&x| num(x)).collect::<Vec<_>>().join(" ")
}

pub fn write_lam1(lam: &Laminate) -> String {
    let mut s = String::new();
    s.push_str("LAM1\n");
    let _ = writeln!(s, "d {} r {}", lam.d(), num(lam.level()));
    let _ = writeln!(s, "atoms {}", lam.atoms().len());
    for a in lam.atoms() {
        let _ = writeln!(s, "{} {}", num(a.weight), coords(&a.state));
    }
    let _ = writeln!(s, "nodes {}", lam.nodes().len());
    for n in lam.nodes() {
        let parent = n.parent.map_or("-".to_string(), |p| p.to_string());
        let _ = writeln!(s, "{} {} {}", parent, num(n.weight), coords(&n.state));
    }
    let _ = writeln!(s, "splits {}", lam.splits().len());
    for sp in lam.splits() {
        let _ = writeln!(s, "{} {} {} {}", sp.parent, sp.children[0], sp.children[1], num(sp.lambda));
    }
    s.push_str("end\n");
    s
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, Vec<&'a str>)> {
        loop {
            let (no, line) = self.inner.next().ok_or_else(|| Error::Parse("unexpected end of LAM1 data".into()))?;
            let t = line.trim();
            if !t.is_empty() {
                return Ok((no + 1, t.split_whitespace().collect()));
            }
        }
    }

    fn header(&mut self, key: &str) -> Result<usize> {
        let (no, f) = self.next()?;
        if f.len() != 2 || f[0] != key {
            return Err(Error::Parse(format!("line {no}: expected '{key} <count>'")));
        }
        parse_usize(f[1], no)
    }
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.parse::<f64>().map_err(|_| Error::Parse(format!("line {line}: bad number '{s}'")))
}

fn parse_usize(s: &str, line: usize) -> Result<usize> {
    s.parse::<usize>().map_err(|_| Error::Parse(format!("line {line}: bad index '{s}'")))
}

fn parse_state(d: usize, f: &[&str], line: usize) -> Result<StateVector> {
    let c: Result<Vec<f64>> = f.iter().map(|x| parse_f64(x, line)).collect();
    StateVector::from_coords(d, c?).map_err(|e| Error::Parse(format!("line {line}: {e}")))
}

pub fn read_lam1(text: &str) -> Result<Laminate> {
    let mut lines = Lines { inner: text.lines().enumerate() };
    let (no, f) = lines.next()?;
    if f != ["LAM1"] {
        return Err(Error::Parse(format!("line {no}: missing LAM1 magic")));
    }
    let (no, f) = lines.next()?;
    if f.len() != 4 || f[0] != "d" || f[2] != "r" {
        return Err(Error::Parse(format!("line {no}: expected 'd <d> r <r>'")));
    }
    let d = parse_usize(f[1], no)?;
    let level = parse_f64(f[3], no)?;
    let dim = StateVector::dim_for(d.max(2));
    let n_atoms = lines.header("atoms")?;
    let mut atoms = Vec::with_capacity(n_atoms);
    for _ in 0..n_atoms {
        let (no, f) = lines.next()?;
        if f.len() != dim + 1 {
            return Err(Error::Parse(format!("line {no}: atom needs {} fields", dim + 1)));
        }
        atoms.push((parse_f64(f[0], no)?, parse_state(d, &f[1..], no)?));
    }
    let n_nodes = lines.header("nodes")?;
    let mut nodes = Vec::with_capacity(n_nodes);
    for i in 0..n_nodes {
        let (no, f) = lines.next()?;
        if f.len() != dim + 2 {
            return Err(Error::Parse(format!("line {no}: node needs {} fields", dim + 2)));
        }
        let parent = if f[0] == "-" { None } else { Some(parse_usize(f[0], no)?) };
        if parent.is_some_and(|p| p >= i) || (parent.is_none() && i != 0) {
            return Err(Error::Parse(format!("line {no}: invalid parent")));
        }
        nodes.push(Node { state: parse_state(d, &f[2..], no)?, weight: parse_f64(f[1], no)?, parent, split: None });
    }
    if nodes.is_empty() {
        return Err(Error::Parse("laminate has no nodes".into()));
    }
    let n_splits = lines.header("splits")?;
    let mut splits = Vec::with_capacity(n_splits);
    for k in 0..n_splits {
        let (no, f) = lines.next()?;
        if f.len() != 4 {
            return Err(Error::Parse(format!("line {no}: split needs 4 fields")));
        }
        let parent = parse_usize(f[0], no)?;
        let children = [parse_usize(f[1], no)?, parse_usize(f[2], no)?];
        if parent >= nodes.len() || children.iter().any(|&c| c >= nodes.len() || nodes[c].parent != Some(parent)) {
            return Err(Error::Parse(format!("line {no}: split references inconsistent nodes")));
        }
        if nodes[parent].split.is_some() {
            return Err(Error::Parse(format!("line {no}: node {parent} split twice")));
        }
        nodes[parent].split = Some(k);
        splits.push(SplitRecord { parent, children, lambda: parse_f64(f[3], no)? });
    }
    let (no, f) = lines.next()?;
    if f != ["end"] {
        return Err(Error::Parse(format!("line {no}: expected 'end'")));
    }
    let lam = Laminate::from_parts(level, nodes, splits)?;
    if lam.atoms().len() != atoms.len()
        || lam.atoms().iter().zip(&atoms).any(|(a, (w, s))| a.weight.to_bits() != w.to_bits() || a.state != *s)
    {
        return Err(Error::Parse("atom block disagrees with the node tree".into()));
    }
    Ok(lam)
}
