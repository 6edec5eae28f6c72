//! Small dense symmetric matrices stored row-major as `n*n` slices.

use std::f64::consts::PI;

pub fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

pub fn outer(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len();
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = a[i] * b[j];
        }
    }
    m
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn frobenius(m: &[f64]) -> f64 {
    norm(m)
}

pub fn mat_vec(m: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n).map(|i| dot(&m[i * n..(i + 1) * n], x)).collect()
}

pub fn mat_mul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                c[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    c
}

pub fn transpose(a: &[f64], n: usize) -> Vec<f64> {
    let mut t = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            t[j * n + i] = a[i * n + j];
        }
    }
    t
}

pub fn trace(m: &[f64], n: usize) -> f64 {
    (0..n).map(|i| m[i * n + i]).sum()
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(m: &[f64], n: usize) -> Vec<f64> {
    match n {
        1 => vec![m[0]],
        2 => {
            let (lo, hi) = eig2(m[0], m[1], m[3]);
            vec![lo, hi]
        }
        3 => eig3(m),
        _ => sym_eigen(m, n).0,
    }
}

pub fn lambda_max(m: &[f64], n: usize) -> f64 {
    match n {
        2 => eig2(m[0], m[1], m[3]).1,
        _ => *sym_eigenvalues(m, n).last().expect("nonempty matrix"),
    }
}

/// Eigenvalues of [[a, b], [b, c]] as (min, max).
pub fn eig2(a: f64, b: f64, c: f64) -> (f64, f64) {
    let mean = 0.5 * (a + c);
    let rad = (0.5 * (a - c)).hypot(b);
    (mean - rad, mean + rad)
}

fn eig3(m: &[f64]) -> Vec<f64> {
    let (a11, a12, a13, a22, a23, a33) = (m[0], m[1], m[2], m[4], m[5], m[8]);
    let p1 = a12 * a12 + a13 * a13 + a23 * a23;
    let q = (a11 + a22 + a33) / 3.0;
    let scale = m.iter().fold(0.0f64, |s, x| s.max(x.abs()));
    if p1 <= 1e-30 * scale * scale {
        let mut v = vec![a11, a22, a33];
        v.sort_by(|x, y| x.partial_cmp(y).unwrap());
        return v;
    }
    let p2 = (a11 - q).powi(2) + (a22 - q).powi(2) + (a33 - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let b = |x: f64| x / p;
    let (b11, b22, b33) = (b(a11 - q), b(a22 - q), b(a33 - q));
    let (b12, b13, b23) = (b(a12), b(a13), b(a23));
    let det = b11 * (b22 * b33 - b23 * b23) - b12 * (b12 * b33 - b23 * b13)
        + b13 * (b12 * b23 - b22 * b13);
    let r = (0.5 * det).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let hi = q + 2.0 * p * phi.cos();
    let lo = q + 2.0 * p * (phi + 2.0 * PI / 3.0).cos();
    let mid = 3.0 * q - hi - lo;
    let mut v = vec![lo, mid, hi];
    v.sort_by(|x, y| x.partial_cmp(y).unwrap());
    v
}

/// Cyclic Jacobi eigen-decomposition. Returns ascending eigenvalues and the
/// matching unit eigenvectors.
pub fn sym_eigen(m: &[f64], n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut a = m.to_vec();
    let mut v = identity(n);
    let scale = frobenius(m).max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[i * n + j] * a[i * n + j];
            }
        }
        if off.sqrt() <= 1e-17 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| a[i * n + i].partial_cmp(&a[j * n + j]).unwrap());
    let vals = idx.iter().map(|&i| a[i * n + i]).collect();
    let vecs = idx
        .iter()
        .map(|&i| (0..n).map(|k| v[k * n + i]).collect())
        .collect();
    (vals, vecs)
}

/// Orthonormal basis of the complement of a nonzero vector.
pub fn orthogonal_complement(x: &[f64]) -> Vec<Vec<f64>> {
    let n = x.len();
    let nx = norm(x);
    let unit: Vec<f64> = x.iter().map(|c| c / nx).collect();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| unit[i].abs().partial_cmp(&unit[j].abs()).unwrap());
    for &k in &order {
        if basis.len() == n - 1 {
            break;
        }
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        let mut w = e.clone();
        let pu = dot(&w, &unit);
        for i in 0..n {
            w[i] -= pu * unit[i];
        }
        for b in &basis {
            let pb = dot(&w, b);
            for i in 0..n {
                w[i] -= pb * b[i];
            }
        }
        let nw = norm(&w);
        if nw > 1e-8 {
            basis.push(w.iter().map(|c| c / nw).collect());
        }
    }
    basis
}
