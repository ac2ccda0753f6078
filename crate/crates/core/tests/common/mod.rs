//! Independent reference computations used by the integration and
//! acceptance tests. Nothing here calls into the library's numerics.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Orthogonal matrix from Gram-Schmidt on a Gaussian matrix.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, p: usize) -> DMatrix<f64> {
    loop {
        let basis = gram_schmidt(&gaussian_matrix(rng, p, p), 1e-8);
        if basis.len() == p {
            return DMatrix::from_columns(&basis);
        }
    }
}

/// Orthonormal basis of the column space by modified Gram-Schmidt; columns
/// whose residual norm falls below `tol` times the largest column norm are
/// dropped.
pub fn gram_schmidt(m: &DMatrix<f64>, tol: f64) -> Vec<DVector<f64>> {
    let scale = m
        .column_iter()
        .map(|c| c.norm())
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for col in m.column_iter() {
        let mut v: DVector<f64> = col.into_owned();
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&v);
                v -= q * c;
            }
        }
        let norm = v.norm();
        if norm > tol * scale {
            basis.push(v / norm);
        }
    }
    basis
}

/// Orthogonal projection of `v` onto the span of an orthonormal `basis`.
pub fn project_onto(basis: &[DVector<f64>], v: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(v.len());
    for q in basis {
        out += q * q.dot(v);
    }
    out
}

/// Weighted moments by explicit summation:
/// `C = sum w a a^T / sum w`, `R = sum w a y / sum w`, `a = (1, x - x0)`.
pub fn gram_loop(
    x: &[Vec<f64>],
    y: &[f64],
    w: &[f64],
    x0: &[f64],
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let p = x0.len();
    let mut c = vec![vec![0.0; p + 1]; p + 1];
    let mut r = vec![0.0; p + 1];
    let mut sw = 0.0;
    for i in 0..y.len() {
        let mut a = vec![1.0];
        for j in 0..p {
            a.push(x[i][j] - x0[j]);
        }
        for j in 0..=p {
            for k in 0..=p {
                c[j][k] += w[i] * a[j] * a[k];
            }
            r[j] += w[i] * a[j] * y[i];
        }
        sw += w[i];
    }
    for j in 0..=p {
        for k in 0..=p {
            c[j][k] /= sw;
        }
        r[j] /= sw;
    }
    (c, r)
}

/// Residuals of the four Penrose conditions for a candidate `x = pinv(m)`:
/// `|mxm - m|`, `|xmx - x|`, `|(mx)^T - mx|`, `|(xm)^T - xm|` (max norms).
pub fn penrose_residuals(m: &DMatrix<f64>, x: &DMatrix<f64>) -> [f64; 4] {
    let mx = m * x;
    let xm = x * m;
    [
        (&mx * m - m).amax(),
        (&xm * x - x).amax(),
        (mx.transpose() - &mx).amax(),
        (xm.transpose() - &xm).amax(),
    ]
}

/// `b^T A b - 2 c^T b + mu * sum pw_j |b_j|`, written out by hand.
pub fn quad_l1_objective(a: &DMatrix<f64>, c: &DVector<f64>, pw: &[f64], mu: f64, b: &[f64]) -> f64 {
    let k = b.len();
    let mut q = 0.0;
    for i in 0..k {
        for j in 0..k {
            q += b[i] * a[(i, j)] * b[j];
        }
        q -= 2.0 * c[i] * b[i];
        if pw[i] > 0.0 {
            q += mu * pw[i] * b[i].abs();
        }
    }
    q
}

/// Minimizes a convex function on an interval by ternary search.
pub fn ternary_min(f: &mut dyn FnMut(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> (f64, f64) {
    for _ in 0..iters {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if f(m1) <= f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

/// Minimizes a convex function of several variables over the box
/// `center +- radius` by nested ternary search.
pub fn nested_ternary(
    f: &dyn Fn(&[f64]) -> f64,
    center: &[f64],
    radius: f64,
    iters: usize,
) -> (Vec<f64>, f64) {
    fn rec(
        f: &dyn Fn(&[f64]) -> f64,
        point: &mut Vec<f64>,
        level: usize,
        center: &[f64],
        radius: f64,
        iters: usize,
    ) -> f64 {
        if level == center.len() {
            return f(point);
        }
        let mut g = |v: f64| {
            point[level] = v;
            rec(f, point, level + 1, center, radius, iters)
        };
        let (best, _) = ternary_min(&mut g, center[level] - radius, center[level] + radius, iters);
        point[level] = best;
        rec(f, point, level + 1, center, radius, iters)
    }
    let mut point = center.to_vec();
    let val = rec(f, &mut point, 0, center, radius, iters);
    (point, val)
}

/// Two-variable minimization: dense grid over `[-3, 3]^2` at step `1e-3`,
/// then nested ternary refinement around the best grid point.
pub fn grid_search_2d<F: Fn(f64, f64) -> f64>(f: F) -> (Vec<f64>, f64) {
    let steps = 6000;
    let h = 6.0 / steps as f64;
    let mut best = (0.0, 0.0, f64::INFINITY);
    for i in 0..=steps {
        let u = -3.0 + h * i as f64;
        for j in 0..=steps {
            let v = -3.0 + h * j as f64;
            let val = f(u, v);
            if val < best.2 {
                best = (u, v, val);
            }
        }
    }
    let g = |b: &[f64]| f(b[0], b[1]);
    let refined = nested_ternary(&g, &[best.0, best.1], 2.0 * h, 80);
    if refined.1 < best.2 {
        refined
    } else {
        (vec![best.0, best.1], best.2)
    }
}

/// Streaming mean and sample standard deviation.
pub fn welford(values: &[f64]) -> (f64, f64) {
    let mut n = 0.0;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for &v in values {
        n += 1.0;
        let delta = v - mean;
        mean += delta / n;
        m2 += delta * (v - mean);
    }
    let sd = if n > 1.0 { (m2 / (n - 1.0)).sqrt() } else { 0.0 };
    (mean, sd)
}

/// `F` re-evaluated entry by entry from the piecewise rule, 1-based.
pub fn f_entry(p: usize, i: usize, j: usize) -> f64 {
    let d = (0.75 * p as f64).round() as usize;
    let q = (0.5 * p as f64).round() as usize;
    if i <= d && j <= d {
        0.3_f64.powi((i as i32 - j as i32).abs())
    } else if i > d && (j + d == q + i || j + d == q + i + 1) {
        0.3
    } else {
        0.0
    }
}

/// Central finite-difference gradient of `f` at `x`.
pub fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut up = x.to_vec();
            let mut dn = x.to_vec();
            up[i] += step;
            dn[i] -= step;
            (f(&up) - f(&dn)) / (2.0 * step)
        })
        .collect()
}

/// Random PSD `p x p` matrix of the given rank.
pub fn random_psd(rng: &mut ChaCha8Rng, p: usize, rank: usize) -> DMatrix<f64> {
    let a = gaussian_matrix(rng, p, rank);
    &a * a.transpose()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}
