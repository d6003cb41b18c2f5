//! Reference computations shared by the integration tests. They avoid the
//! library's own numerics: plain loops, exhaustive scans, power iteration.
#![allow(dead_code)]

use eicp::perturb::Rng;
use eicp::PointCloud;
use nalgebra::DMatrix;

/// `X·Xᵀ` by explicit triple loop.
pub fn explicit_covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (d, n) = x.shape();
    let mut out = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let mut s = 0.0;
            for k in 0..n {
                s += x[(i, k)] * x[(j, k)];
            }
            out[(i, j)] = s;
        }
    }
    out
}

/// Nearest column by exhaustive scan, lowest index on ties.
pub fn brute_nearest(target: &PointCloud, q: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, p) in target.points().enumerate() {
        let d2: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
        if d2 < best.1 {
            best = (j, d2);
        }
    }
    (best.0, best.1.sqrt())
}

/// RMS of one-directional nearest-neighbour distances by exhaustive scan.
pub fn brute_match_rms(source: &PointCloud, target: &PointCloud) -> f64 {
    let sum: f64 = source
        .points()
        .map(|q| brute_nearest(target, q).1.powi(2))
        .sum();
    (sum / source.len() as f64).sqrt()
}

/// Largest singular value by power iteration on `MᵀM`.
pub fn power_iteration_norm(m: &DMatrix<f64>) -> f64 {
    let gram = m.transpose() * m;
    let n = gram.nrows();
    let mut v = nalgebra::DVector::from_fn(n, |i, _| 1.0 + 0.37 * i as f64);
    let mut lambda = 0.0;
    for _ in 0..5000 {
        let w = &gram * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = w / norm;
        let rayleigh = next.dot(&(&gram * &next));
        v = next;
        if (rayleigh - lambda).abs() <= 1e-15 * rayleigh.abs() {
            lambda = rayleigh;
            break;
        }
        lambda = rayleigh;
    }
    lambda.max(0.0).sqrt()
}

/// Orthogonal matrix from classical Gram–Schmidt on a Gaussian matrix.
pub fn gram_schmidt_orthogonal(d: usize, rng: &mut Rng) -> DMatrix<f64> {
    let mut cols: Vec<nalgebra::DVector<f64>> = Vec::new();
    while cols.len() < d {
        let mut v = nalgebra::DVector::from_fn(d, |_, _| rng.standard_normal());
        for c in &cols {
            let proj = c.dot(&v);
            v -= c * proj;
        }
        let n = v.norm();
        if n > 1e-6 {
            cols.push(v / n);
        }
    }
    DMatrix::from_columns(&cols)
}

/// Matrix exponential of a small skew-symmetric matrix by Taylor series.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let d = a.nrows();
    let mut out = DMatrix::identity(d, d);
    let mut term = DMatrix::identity(d, d);
    for k in 1..30 {
        term = &term * a / k as f64;
        out += &term;
    }
    out
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

/// Uniform cloud in `[−h, h]^d` drawn straight from the rng.
pub fn uniform_cloud(n: usize, d: usize, h: f64, rng: &mut Rng) -> PointCloud {
    PointCloud::new(DMatrix::from_fn(d, n, |_, _| rng.uniform(-h, h))).unwrap()
}

/// Anisotropic Gaussian cloud with the given per-axis scales.
pub fn scaled_gaussian(n: usize, scales: &[f64], rng: &mut Rng) -> PointCloud {
    PointCloud::new(DMatrix::from_fn(scales.len(), n, |r, _| {
        scales[r] * rng.standard_normal()
    }))
    .unwrap()
}
