//! One-dimensional oscillation profiles and slab cutoffs.

/// Quintic smoothstep clamped to [0,1]: value, first and second derivative.
pub fn smoothstep(x: f64) -> [f64; 3] {
    if x <= 0.0 {
        [0.0; 3]
    } else if x >= 1.0 {
        [1.0, 0.0, 0.0]
    } else {
        let x2 = x * x;
        [x2 * x * (10.0 - 15.0 * x + 6.0 * x2), 30.0 * x2 * (1.0 - x).powi(2), 60.0 * x * (1.0 - x) * (1.0 - 2.0 * x)]
    }
}

/// Antiderivative of the smoothstep on [0,1], zero at 0.
fn ramp_int1(x: f64) -> f64 {
    x.powi(4) * (2.5 - 3.0 * x + x * x)
}

/// Second antiderivative, zero with zero slope at 0.
fn ramp_int2(x: f64) -> f64 {
    x.powi(5) * (0.5 - 0.5 * x + x * x / 7.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Shape {
    Zero,
    One,
    Up,
    Down,
}

#[derive(Clone, Copy, Debug)]
struct Piece {
    start: f64,
    width: f64,
    shape: Shape,
    /// integral of psi from 0 to start
    i1: f64,
    /// double integral of psi from 0 to start
    i2: f64,
}

impl Piece {
    fn local(&self, t: f64) -> (f64, f64, f64) {
        let s = t - self.start;
        let w = self.width;
        match self.shape {
            Shape::Zero => (0.0, 0.0, 0.0),
            Shape::One => (1.0, s, 0.5 * s * s),
            Shape::Up => {
                let x = (s / w).clamp(0.0, 1.0);
                (smoothstep(x)[0], w * ramp_int1(x), w * w * ramp_int2(x))
            }
            Shape::Down => {
                let x = (s / w).clamp(0.0, 1.0);
                (1.0 - smoothstep(x)[0], w * (x - ramp_int1(x)), w * w * (0.5 * x * x - ramp_int2(x)))
            }
        }
    }
}

/// Where a profile coordinate falls.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Segment {
    Plateau(usize),
    /// Transition into the given leaf from its predecessor.
    Transition(usize),
}

/// A 1-periodic partition of unity psi_0..psi_{K-1} with mean(psi_i) = mu_i.
/// Each period runs through: transition into 0, plateau 0, transition into
/// 1, plateau 1, ... . Leaf i also provides H_i with H_i'' = psi_i - mu_i,
/// periodic and centred.
#[derive(Clone, Debug)]
pub struct CyclicProfile {
    weights: Vec<f64>,
    transition: f64,
    starts: Vec<f64>,
    pieces: Vec<Vec<Piece>>,
    /// slope and offset constants of H_i
    consts: Vec<(f64, f64)>,
}

impl CyclicProfile {
    /// `transition` is the width of each transition as a fraction of the
    /// period; it must be smaller than every weight.
    pub fn new(weights: &[f64], transition: f64) -> Option<Self> {
        let k = weights.len();
        if k == 0 || weights.iter().any(|&w| w <= transition) || transition <= 0.0 && k > 1 {
            return None;
        }
        let transition = if k == 1 { 0.0 } else { transition };
        let mut starts = Vec::with_capacity(k);
        let mut t = 0.0;
        for &w in weights {
            starts.push(t);
            t += w;
        }
        let mut pieces = Vec::with_capacity(k);
        let mut consts = Vec::with_capacity(k);
        for i in 0..k {
            let mut list: Vec<(f64, f64, Shape)> = Vec::new();
            for j in 0..k {
                let s = starts[j];
                let plateau = weights[j] - transition;
                let tshape = if k == 1 {
                    Shape::One
                } else if j == i {
                    Shape::Up
                } else if (j + k - 1) % k == i {
                    Shape::Down
                } else {
                    Shape::Zero
                };
                if transition > 0.0 {
                    list.push((s, transition, tshape));
                }
                list.push((s + transition, plateau, if j == i { Shape::One } else { Shape::Zero }));
            }
            let mut built = Vec::with_capacity(list.len());
            let (mut i1, mut i2) = (0.0, 0.0);
            for (start, width, shape) in list {
                let p = Piece { start, width, shape, i1, i2 };
                let (_, a1, a2) = p.local(start + width);
                i2 += i1 * width + a2;
                i1 += a1;
                built.push(p);
            }
            let mu = weights[i];
            let slope = -(i2 - 0.5 * mu);
            pieces.push(built);
            consts.push((slope, 0.0));
        }
        let mut prof = Self { weights: weights.to_vec(), transition, starts, pieces, consts };
        for i in 0..k {
            let (lo, hi) = (0..2048).fold((f64::MAX, f64::MIN), |(lo, hi), s| {
                let h = prof.eval(i, s as f64 / 2048.0)[0];
                (lo.min(h), hi.max(h))
            });
            prof.consts[i].1 = -0.5 * (lo + hi);
        }
        Some(prof)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn transition(&self) -> f64 {
        self.transition
    }

    /// Plateau of leaf i within one period, as (start, end).
    pub fn plateau(&self, i: usize) -> (f64, f64) {
        let s = self.starts[i] + self.transition;
        (s, self.starts[i] + self.weights[i])
    }

    pub fn segment(&self, t: f64) -> Segment {
        let f = t - t.floor();
        let k = self.weights.len();
        let mut j = k - 1;
        while j > 0 && self.starts[j] > f {
            j -= 1;
        }
        if f < self.starts[j] + self.transition {
            Segment::Transition(j)
        } else {
            Segment::Plateau(j)
        }
    }

    /// psi_i(t).
    pub fn psi(&self, i: usize, t: f64) -> f64 {
        let f = t - t.floor();
        self.piece(i, f).local(f).0
    }

    fn piece(&self, i: usize, f: f64) -> &Piece {
        let list = &self.pieces[i];
        let idx = list.partition_point(|p| p.start <= f).max(1) - 1;
        &list[idx]
    }

    /// [H_i, H_i', H_i''] at t.
    pub fn eval(&self, i: usize, t: f64) -> [f64; 3] {
        let f = t - t.floor();
        let p = self.piece(i, f);
        let (psi, a1, a2) = p.local(f);
        let mu = self.weights[i];
        let (c1, c0) = self.consts[i];
        let i1 = p.i1 + a1;
        let i2 = p.i2 + p.i1 * (f - p.start) + a2;
        [i2 - 0.5 * mu * f * f + c1 * f + c0, i1 - mu * f + c1, psi - mu]
    }

    /// sup over t of |H_i| and |H_i'|, sampled.
    pub fn bounds(&self, i: usize) -> (f64, f64) {
        (0..2048).fold((0.0f64, 0.0f64), |(a, b), s| {
            let e = self.eval(i, s as f64 / 2048.0);
            (a.max(e[0].abs()), b.max(e[1].abs()))
        })
    }
}

/// {x : lo <= x . normal <= hi} with a smooth ramp of width `margin` inside
/// both faces.
#[derive(Clone, Debug, PartialEq)]
pub struct Slab {
    pub normal: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
}

impl Slab {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn shrunk(&self, m: f64) -> Self {
        Self { normal: self.normal.clone(), lo: self.lo + m, hi: self.hi - m }
    }

    fn factor(&self, y: f64, m: f64) -> [f64; 3] {
        let l = smoothstep((y - self.lo) / m);
        let r = smoothstep((self.hi - y) / m);
        [l[0] * r[0], (l[1] * r[0] - l[0] * r[1]) / m, (l[2] * r[0] - 2.0 * l[1] * r[1] + l[0] * r[2]) / (m * m)]
    }
}

/// Cutoff given by the product of slab factors with common ramp width `m`:
/// value, gradient, Hessian (row-major). Returns None where it vanishes.
pub fn slab_cutoff(slabs: &[Slab], m: f64, x: &[f64]) -> Option<(f64, Vec<f64>, Vec<f64>)> {
    let d = x.len();
    let mut parts = Vec::with_capacity(slabs.len());
    for s in slabs {
        let y: f64 = s.normal.iter().zip(x).map(|(a, b)| a * b).sum();
        let f = s.factor(y, m);
        if f[0] == 0.0 {
            return None;
        }
        parts.push(f);
    }
    let value: f64 = parts.iter().map(|p| p[0]).product();
    let mut grad = vec![0.0; d];
    let mut hess = vec![0.0; d * d];
    for (a, (sa, pa)) in slabs.iter().zip(&parts).enumerate() {
        if pa[1] == 0.0 && pa[2] == 0.0 {
            continue;
        }
        let rest = value / pa[0];
        for i in 0..d {
            grad[i] += pa[1] * rest * sa.normal[i];
            for j in 0..d {
                hess[i * d + j] += pa[2] * rest * sa.normal[i] * sa.normal[j];
            }
        }
        for (b, (sb, pb)) in slabs.iter().zip(&parts).enumerate() {
            if b == a || pb[1] == 0.0 {
                continue;
            }
            let rest2 = rest / pb[0];
            for i in 0..d {
                for j in 0..d {
                    hess[i * d + j] += pa[1] * pb[1] * rest2 * sa.normal[i] * sb.normal[j];
                }
            }
        }
    }
    Some((value, grad, hess))
}
