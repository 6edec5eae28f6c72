//! Grid approximation of the lamination hull of the four slice points of the
//! constraint set, using joins along coordinate-plane directions.

use rayon::prelude::*;

use crate::state::SlicePoint;

/// Grid parameters: `res` nodes per axis spanning [-sqrt r, sqrt r]^2 x [-r/2, r/2]
/// with nodes on the box faces.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HullGridSpec {
    pub res: usize,
}

impl HullGridSpec {
    pub fn new(res: usize) -> Self {
        Self { res }
    }
}

/// Boolean occupancy on a regular node grid in (a, b, c) space.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyGrid {
    pub res: [usize; 3],
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    pub cells: Vec<bool>,
    /// Occupied count after each round; entry 0 is the seed count.
    pub history: Vec<usize>,
    /// Whether the last round changed nothing.
    pub converged: bool,
}

impl OccupancyGrid {
    pub fn empty(lo: [f64; 3], hi: [f64; 3], res: [usize; 3]) -> Self {
        assert!(res.iter().all(|&n| n >= 2), "at least two nodes per axis");
        Self { res, lo, hi, cells: vec![false; res[0] * res[1] * res[2]], history: Vec::new(), converged: false }
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.res[1] + j) * self.res[2] + k
    }

    pub fn step(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / (self.res[axis] - 1) as f64
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> SlicePoint {
        SlicePoint::new(
            self.lo[0] + i as f64 * self.step(0),
            self.lo[1] + j as f64 * self.step(1),
            self.lo[2] + k as f64 * self.step(2),
        )
    }

    /// Nearest node to `p`, if `p` lies inside the grid box (half a step of slack).
    pub fn nearest(&self, p: SlicePoint) -> Option<[usize; 3]> {
        let x = [p.a, p.b, p.c];
        let mut out = [0usize; 3];
        for axis in 0..3 {
            let t = ((x[axis] - self.lo[axis]) / self.step(axis)).round();
            if t < 0.0 || t > (self.res[axis] - 1) as f64 {
                return None;
            }
            out[axis] = t as usize;
        }
        Some(out)
    }

    pub fn occupied(&self, i: usize, j: usize, k: usize) -> bool {
        self.cells[self.index(i, j, k)]
    }

    pub fn occupied_near(&self, p: SlicePoint) -> bool {
        self.nearest(p).is_some_and(|[i, j, k]| self.occupied(i, j, k))
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    /// Occupancy as a scalar FLD1 body (1 occupied, 0 empty), with the node
    /// box in the profile token. Needs equal node counts on all axes.
    pub fn to_fld1_scalar(&self, label: &str) -> Vec<u8> {
        assert!(self.res.iter().all(|&n| n == self.res[0]), "cubic node grid");
        let f = |x: [f64; 3]| x.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(",");
        let head = format!(
            "FLD1\nd 3\ndomain Q\nn {}\ncomponents occupied\nprofile {label}:lo={}:hi={}\nend\n",
            self.res[0],
            f(self.lo),
            f(self.hi)
        );
        let mut out = head.into_bytes();
        for &c in &self.cells {
            out.extend_from_slice(&(if c { 1.0f64 } else { 0.0 }).to_le_bytes());
        }
        out
    }

    pub fn cell_diameter(&self) -> f64 {
        (0..3).map(|a| self.step(a).powi(2)).sum::<f64>().sqrt()
    }

    /// Runs `rounds` more hull rounds, recording counts; returns what they added.
    pub fn extra_rounds(&mut self, rounds: usize) -> usize {
        let mut total = 0;
        for _ in 0..rounds {
            let added = self.round();
            self.history.push(self.count());
            total += added;
        }
        if rounds > 0 {
            self.converged = total == 0;
        }
        total
    }

    fn set(&mut self, p: [usize; 3]) {
        let idx = self.index(p[0], p[1], p[2]);
        self.cells[idx] = true;
    }

    /// One round: in every coordinate plane, fill the lattice convex hull of
    /// the occupied nodes. Returns the number of newly occupied nodes.
    fn round(&mut self) -> usize {
        let res = self.res;
        let planes: Vec<(usize, usize)> =
            (0..3).flat_map(|axis| (0..res[axis]).map(move |p| (axis, p))).collect();
        let snapshot = &*self;
        let additions: Vec<Vec<[usize; 3]>> = planes
            .par_iter()
            .map(|&(axis, plane)| snapshot.fill_plane(axis, plane))
            .collect();
        let mut added = 0;
        for list in additions {
            for p in list {
                let idx = self.index(p[0], p[1], p[2]);
                if !self.cells[idx] {
                    self.cells[idx] = true;
                    added += 1;
                }
            }
        }
        added
    }

    fn fill_plane(&self, axis: usize, plane: usize) -> Vec<[usize; 3]> {
        let (u_axis, v_axis) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let lift = |x: i64, y: i64| {
            let mut p = [0usize; 3];
            p[axis] = plane;
            p[u_axis] = x as usize;
            p[v_axis] = y as usize;
            p
        };
        let mut pts: Vec<(i64, i64)> = Vec::new();
        for x in 0..self.res[u_axis] {
            for y in 0..self.res[v_axis] {
                if self.cells[self.index_of(lift(x as i64, y as i64))] {
                    pts.push((x as i64, y as i64));
                }
            }
        }
        if pts.len() < 2 {
            return Vec::new();
        }
        let hull = convex_hull(pts);
        let mut out = Vec::new();
        if hull.len() == 2 {
            let (p, q) = (hull[0], hull[1]);
            let g = gcd((q.0 - p.0).abs(), (q.1 - p.1).abs());
            let (dx, dy) = ((q.0 - p.0) / g, (q.1 - p.1) / g);
            for t in 0..=g {
                out.push(lift(p.0 + t * dx, p.1 + t * dy));
            }
            return out;
        }
        let (xmin, xmax) = hull.iter().fold((i64::MAX, i64::MIN), |(a, b), p| (a.min(p.0), b.max(p.0)));
        let (ymin, ymax) = hull.iter().fold((i64::MAX, i64::MIN), |(a, b), p| (a.min(p.1), b.max(p.1)));
        for x in xmin..=xmax {
            for y in ymin..=ymax {
                let inside = (0..hull.len()).all(|e| {
                    let a = hull[e];
                    let b = hull[(e + 1) % hull.len()];
                    cross(a, b, (x, y)) >= 0
                });
                if inside {
                    out.push(lift(x, y));
                }
            }
        }
        out
    }

    fn index_of(&self, p: [usize; 3]) -> usize {
        self.index(p[0], p[1], p[2])
    }
}

fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.max(1)
    } else {
        gcd(b, a % b)
    }
}

/// Counter-clockwise hull without collinear points (monotone chain).
fn convex_hull(mut pts: Vec<(i64, i64)>) -> Vec<(i64, i64)> {
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<(i64, i64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(i64, i64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Seeds the four slice points of the constraint set at level r and iterates
/// plane-hull rounds until nothing changes or `max_rounds` is reached.
pub fn lc_hull_slice(r: f64, spec: HullGridSpec, max_rounds: usize) -> OccupancyGrid {
    let s = r.sqrt();
    let mut grid = OccupancyGrid::empty([-s, -s, -0.5 * r], [s, s, 0.5 * r], [spec.res; 3]);
    for p in [[s, 0.0, 0.5 * r], [-s, 0.0, 0.5 * r], [0.0, s, -0.5 * r], [0.0, -s, -0.5 * r]] {
        let idx = grid.nearest(SlicePoint::new(p[0], p[1], p[2])).expect("seed inside grid");
        grid.set(idx);
    }
    grid.history.push(grid.count());
    for _ in 0..max_rounds {
        let added = grid.round();
        grid.history.push(grid.count());
        if added == 0 {
            grid.converged = true;
            break;
        }
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_round_gives_the_two_segments() {
        let g = lc_hull_slice(1.0, HullGridSpec::new(9), 1);
        for i in 0..9 {
            for j in 0..9 {
                for k in 0..9 {
                    let top = k == 8 && j == 4;
                    let bottom = k == 0 && i == 4;
                    assert_eq!(g.occupied(i, j, k), top || bottom, "{i} {j} {k}");
                }
            }
        }
    }

    #[test]
    fn coarse_grid_is_symmetric() {
        let g = lc_hull_slice(1.0, HullGridSpec::new(3), 10);
        assert!(g.converged);
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    assert_eq!(g.occupied(i, j, k), g.occupied(2 - i, j, k));
                    assert_eq!(g.occupied(i, j, k), g.occupied(i, 2 - j, k));
                }
            }
        }
    }

    #[test]
    fn hull_fill_includes_interior_lattice_points() {
        let h = convex_hull(vec![(0, 0), (2, 1), (1, 2)]);
        assert_eq!(h.len(), 3);
        let mut g = OccupancyGrid::empty([0.0; 3], [2.0; 3], [3, 3, 3]);
        for p in [[0, 0, 0], [0, 2, 1], [0, 1, 2]] {
            g.set(p);
        }
        g.round();
        assert!(g.occupied(0, 1, 1));
    }
}
