//! FFT-based calculus on the periodic grid of [0,1)^d: derivatives, weak
//! residuals in H^{-1}, and pressure recovery.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

/// A periodic grid with `n` points per axis on the unit torus; point i along
/// an axis sits at i/n. Arrays are row-major with the first axis slowest.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Grid {
    pub d: usize,
    pub n: usize,
}

impl Grid {
    pub fn new(d: usize, n: usize) -> Self {
        assert!(d >= 1 && n >= 2, "grid needs d >= 1 and n >= 2");
        Self { d, n }
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.d];
        for a in (0..self.d).rev() {
            out[a] = idx % self.n;
            idx /= self.n;
        }
        out
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx).into_iter().map(|i| i as f64 / self.n as f64).collect()
    }

    /// Integer frequency of index i in FFT order.
    pub fn freq(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i <= n / 2 {
            i
        } else {
            i - n
        }
    }

    /// Angular wavevector 2 pi m of flat index `idx`.
    pub fn wavevector(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx).into_iter().map(|i| 2.0 * PI * self.freq(i) as f64).collect()
    }

    /// Whether any component of the mode is the unpaired Nyquist frequency.
    pub fn is_nyquist(&self, idx: usize) -> bool {
        self.n % 2 == 0 && self.multi_index(idx).into_iter().any(|i| i == self.n / 2)
    }

    pub fn cell_volume(&self) -> f64 {
        1.0 / self.len() as f64
    }
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut planner = FftPlanner::new();
    if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    }
}

/// In-place d-dimensional FFT. The inverse includes the 1/n^d normalization.
pub fn fft(grid: Grid, data: &mut [Complex64], inverse: bool) {
    let n = grid.n;
    assert_eq!(data.len(), grid.len());
    let f = plan(n, inverse);
    for axis in 0..grid.d {
        let stride = n.pow((grid.d - 1 - axis) as u32);
        if stride == 1 {
            data.par_chunks_mut(n).for_each(|line| f.process(line));
            continue;
        }
        let block = stride * n;
        data.par_chunks_mut(block).for_each(|chunk| {
            let mut line = vec![Complex64::new(0.0, 0.0); n];
            for offset in 0..stride {
                for t in 0..n {
                    line[t] = chunk[offset + t * stride];
                }
                f.process(&mut line);
                for t in 0..n {
                    chunk[offset + t * stride] = line[t];
                }
            }
        });
    }
    if inverse {
        let scale = 1.0 / grid.len() as f64;
        data.par_iter_mut().for_each(|x| *x *= scale);
    }
}

pub fn forward(grid: Grid, real: &[f64]) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = real.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft(grid, &mut data, false);
    data
}

pub fn inverse(grid: Grid, mut data: Vec<Complex64>) -> Vec<f64> {
    fft(grid, &mut data, true);
    data.into_iter().map(|c| c.re).collect()
}

/// Spectral partial derivative along `axis` (Nyquist mode dropped).
pub fn derivative(grid: Grid, f: &[f64], axis: usize) -> Vec<f64> {
    let mut hat = forward(grid, f);
    hat.par_iter_mut().enumerate().for_each(|(idx, c)| {
        if grid.is_nyquist(idx) {
            *c = Complex64::new(0.0, 0.0);
        } else {
            let k = grid.wavevector(idx)[axis];
            *c *= Complex64::new(0.0, k);
        }
    });
    inverse(grid, hat)
}

/// H^{-1} norm of a collection of scalar components: sqrt of
/// sum_k |f_k|^2 / (1 + |k|^2) with f_k normalized by 1/n^d.
pub fn hm1_norm_hat(grid: Grid, hats: &[Vec<Complex64>]) -> f64 {
    let scale = 1.0 / grid.len() as f64;
    let total = det_sum(grid.len(), |idx| {
        let k2: f64 = grid.wavevector(idx).iter().map(|k| k * k).sum();
        let m: f64 = hats.iter().map(|h| (h[idx] * scale).norm_sqr()).sum();
        m / (1.0 + k2)
    });
    total.sqrt()
}

/// Parallel sum of f(0..len) whose rounding does not depend on the number of
/// threads: fixed chunks, then a sequential pass over the chunk totals.
pub fn det_sum(len: usize, f: impl Fn(usize) -> f64 + Sync) -> f64 {
    const CHUNK: usize = 4096;
    let chunks = len.div_ceil(CHUNK);
    let partial: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| (c * CHUNK..((c + 1) * CHUNK).min(len)).map(&f).sum())
        .collect();
    partial.iter().sum()
}

pub fn hm1_norm(grid: Grid, fields: &[&[f64]]) -> f64 {
    let hats: Vec<Vec<Complex64>> = fields.iter().map(|f| forward(grid, f)).collect();
    hm1_norm_hat(grid, &hats)
}

/// L^2 norm on the unit torus.
pub fn l2_norm(grid: Grid, fields: &[&[f64]]) -> f64 {
    let s: f64 = fields.iter().map(|f| f.iter().map(|x| x * x).sum::<f64>()).sum();
    (s * grid.cell_volume()).sqrt()
}

/// Divergence residual of a vector field and momentum residual
/// div U + grad q of a full symmetric matrix field, both in H^{-1}.
pub fn weak_residuals(grid: Grid, v: &[&[f64]], u_full: &[Vec<f64>], q: &[f64]) -> (f64, f64) {
    let d = grid.d;
    let vh: Vec<Vec<Complex64>> = v.iter().map(|f| forward(grid, f)).collect();
    let uh: Vec<Vec<Complex64>> = u_full.iter().map(|f| forward(grid, f)).collect();
    let qh = forward(grid, q);
    let len = grid.len();
    let mut div = vec![Complex64::new(0.0, 0.0); len];
    let mut mom: Vec<Vec<Complex64>> = vec![vec![Complex64::new(0.0, 0.0); len]; d];
    for idx in 0..len {
        if grid.is_nyquist(idx) {
            continue;
        }
        let k = grid.wavevector(idx);
        let mut s = Complex64::new(0.0, 0.0);
        for j in 0..d {
            s += Complex64::new(0.0, k[j]) * vh[j][idx];
        }
        div[idx] = s;
        for i in 0..d {
            let mut m = Complex64::new(0.0, k[i]) * qh[idx];
            for j in 0..d {
                m += Complex64::new(0.0, k[j]) * uh[i * d + j][idx];
            }
            mom[i][idx] = m;
        }
    }
    (hm1_norm_hat(grid, &[div]), hm1_norm_hat(grid, &mom))
}

/// Solves Delta q = -div div U on the torus with zero mean.
pub fn pressure_torus(grid: Grid, u_full: &[Vec<f64>]) -> Vec<f64> {
    let d = grid.d;
    let uh: Vec<Vec<Complex64>> = u_full.iter().map(|f| forward(grid, f)).collect();
    let mut qh = vec![Complex64::new(0.0, 0.0); grid.len()];
    qh.par_iter_mut().enumerate().for_each(|(idx, out)| {
        let k = grid.wavevector(idx);
        let k2: f64 = k.iter().map(|x| x * x).sum();
        if k2 == 0.0 {
            return;
        }
        let mut s = Complex64::new(0.0, 0.0);
        for i in 0..d {
            for j in 0..d {
                s += k[i] * k[j] * uh[i * d + j][idx];
            }
        }
        *out = -s / k2;
    });
    inverse(grid, qh)
}

/// Solves Delta q = -div div U on the cube [0,1]^d with q = 0 on the
/// boundary, via odd extension to the doubled periodic grid. `u_full` must
/// vanish near the boundary (compact support), which is the case for
/// localized constructions.
pub fn pressure_dirichlet(grid: Grid, u_full: &[Vec<f64>]) -> Vec<f64> {
    let d = grid.d;
    let n = grid.n;
    // right-hand side -div div U on the periodic grid
    let mut rhs = vec![0.0; grid.len()];
    for i in 0..d {
        for j in 0..d {
            let dj = derivative(grid, &u_full[i * d + j], j);
            let dij = derivative(grid, &dj, i);
            for (r, x) in rhs.iter_mut().zip(&dij) {
                *r -= x;
            }
        }
    }
    let big = Grid::new(d, 2 * n);
    let mut ext = vec![Complex64::new(0.0, 0.0); big.len()];
    for (idx, e) in ext.iter_mut().enumerate() {
        let mi = big.multi_index(idx);
        let mut sign = 1.0;
        let mut src = 0usize;
        let mut zero = false;
        for &m in &mi {
            let (s, sgn) = if m < n {
                (m, 1.0)
            } else {
                (2 * n - m, -1.0)
            };
            if s == 0 || s == n {
                zero = true;
            }
            sign *= sgn;
            src = src * n + s % n;
        }
        if !zero {
            *e = Complex64::new(sign * rhs[src], 0.0);
        }
    }
    fft(big, &mut ext, false);
    ext.par_iter_mut().enumerate().for_each(|(idx, c)| {
        // period 2 along each axis: wavevector pi m
        let k2: f64 = big.multi_index(idx).iter().map(|&i| (PI * big.freq(i) as f64).powi(2)).sum();
        if k2 == 0.0 {
            *c = Complex64::new(0.0, 0.0);
        } else {
            *c /= -k2;
        }
    });
    fft(big, &mut ext, true);
    let mut q = vec![0.0; grid.len()];
    for (idx, out) in q.iter_mut().enumerate() {
        let mi = grid.multi_index(idx);
        let mut b = 0usize;
        for &m in &mi {
            b = b * (2 * n) + m;
        }
        *out = ext[b].re;
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivative_of_sine() {
        let g = Grid::new(2, 32);
        let f: Vec<f64> = (0..g.len()).map(|i| (2.0 * PI * 3.0 * g.point(i)[1]).sin()).collect();
        let df = derivative(g, &f, 1);
        for i in 0..g.len() {
            let x = g.point(i)[1];
            assert!((df[i] - 6.0 * PI * (6.0 * PI * x).cos()).abs() < 1e-10);
        }
        let dx = derivative(g, &f, 0);
        assert!(dx.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn three_dimensional_round_trip() {
        let g = Grid::new(3, 8);
        let f: Vec<f64> = (0..g.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let back = inverse(g, forward(g, &f));
        for (a, b) in f.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn hm1_of_single_mode() {
        let g = Grid::new(1, 16);
        let f: Vec<f64> = (0..16).map(|i| (2.0 * PI * i as f64 / 16.0).cos()).collect();
        // two modes of amplitude 1/2 at |k| = 2 pi
        let expect = (0.5 / (1.0 + 4.0 * PI * PI)).sqrt();
        assert!((hm1_norm(g, &[&f]) - expect).abs() < 1e-14);
    }

    #[test]
    fn constant_fields_have_no_residual() {
        let g = Grid::new(2, 8);
        let c = |x: f64| vec![x; g.len()];
        let u = vec![c(0.3), c(0.1), c(0.1), c(-0.3)];
        let (dv, dm) = weak_residuals(g, &[&c(1.0), &c(2.0)], &u, &c(0.4));
        assert!(dv < 1e-15 && dm < 1e-15);
        let q = pressure_torus(g, &u);
        assert!(q.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn torus_pressure_solves_poisson() {
        let g = Grid::new(2, 32);
        let comp = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
            (0..g.len()).map(|i| {
                let p = g.point(i);
                f(p[0], p[1])
            }).collect()
        };
        let u11 = comp(&|x, y| (2.0 * PI * x).sin() * (2.0 * PI * y).cos());
        let u12 = comp(&|x, y| (4.0 * PI * (x + y)).cos());
        let u22: Vec<f64> = u11.iter().map(|x| -x).collect();
        let u = vec![u11, u12.clone(), u12, u22];
        let q = pressure_torus(g, &u);
        // residual of Delta q + div div U
        let mut res = vec![0.0; g.len()];
        for a in 0..2 {
            let qa = derivative(g, &derivative(g, &q, a), a);
            for (r, x) in res.iter_mut().zip(&qa) {
                *r += x;
            }
            for b in 0..2 {
                let t = derivative(g, &derivative(g, &u[a * 2 + b], b), a);
                for (r, x) in res.iter_mut().zip(&t) {
                    *r += x;
                }
            }
        }
        assert!(l2_norm(g, &[&res]) < 1e-9);
    }
}
