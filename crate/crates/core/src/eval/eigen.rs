//! Dense symmetric eigenpairs: Householder reduction to tridiagonal form,
//! implicit QL for the eigenvalues and inverse iteration for the few
//! eigenvectors that are needed.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{dot, DenseMatrix};

/// Largest matrix order accepted by the dense solver.
pub const DENSE_LIMIT: usize = 20_000;

struct Tridiagonal {
    diag: Vec<f64>,
    /// `off[i]` couples rows `i` and `i + 1`.
    off: Vec<f64>,
    /// Unit Householder vectors; `reflectors[k]` acts on indices `k + 1..`.
    reflectors: Vec<Vec<f64>>,
}

fn tridiagonalize(mut a: DenseMatrix) -> Tridiagonal {
    let n = a.rows();
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n.saturating_sub(1)];
    let mut reflectors = Vec::with_capacity(n.saturating_sub(2));
    let mut p = vec![0.0; n];
    for k in 0..n.saturating_sub(2) {
        let m = n - k - 1;
        let mut v: Vec<f64> = (k + 1..n).map(|i| a.get(i, k)).collect();
        let norm = libm::sqrt(dot(&v, &v));
        let alpha = if v[0] > 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vnorm = libm::sqrt(dot(&v, &v));
        diag[k] = a.get(k, k);
        if vnorm <= f64::MIN_POSITIVE || norm == 0.0 {
            off[k] = a.get(k + 1, k);
            reflectors.push(Vec::new());
            continue;
        }
        v.iter_mut().for_each(|x| *x /= vnorm);
        off[k] = alpha;

        // B ← H B H with H = I - 2vvᵀ on the trailing block
        for i in 0..m {
            p[i] = dot(&a.row(k + 1 + i)[k + 1..], &v);
        }
        let kk = dot(&p[..m], &v);
        for i in 0..m {
            p[i] -= kk * v[i];
        }
        for i in 0..m {
            let row = &mut a.row_mut(k + 1 + i)[k + 1..];
            let (vi, qi) = (v[i], p[i]);
            for j in 0..m {
                row[j] -= 2.0 * (vi * p[j] + qi * v[j]);
            }
        }
        reflectors.push(v);
    }
    if n >= 2 {
        diag[n - 2] = a.get(n - 2, n - 2);
        off[n - 2] = a.get(n - 1, n - 2);
    }
    if n >= 1 {
        diag[n - 1] = a.get(n - 1, n - 1);
    }
    Tridiagonal { diag, off, reflectors }
}

/// Eigenvalues of a symmetric tridiagonal matrix by implicit QL with Wilkinson shifts.
fn tridiagonal_eigenvalues(diag: &[f64], off: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    e[..off.len()].copy_from_slice(off);
    // absolute floor so blocks of zero diagonal (isolated nodes) still deflate
    let norm = (0..n).map(|i| d[i].abs() + e[i].abs()).fold(0.0, f64::max);
    let floor = f64::EPSILON * norm;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd || e[m].abs() <= floor {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::Numeric { op: "tridiagonal_ql" });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = libm::hypot(g, 1.0);
            g = d[m] - d[l] + e[l] / (g + if g >= 0.0 { r.abs() } else { -r.abs() });
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = libm::hypot(f, g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(d)
}

// Solves (T - shift I) x = b by Gaussian elimination with partial pivoting.
fn tridiagonal_solve(diag: &[f64], off: &[f64], shift: f64, b: &mut [f64], tiny: f64) {
    let n = diag.len();
    // band rows: main, first and second superdiagonals
    let mut main: Vec<f64> = diag.iter().map(|d| d - shift).collect();
    let mut up1: Vec<f64> = (0..n).map(|i| if i + 1 < n { off[i] } else { 0.0 }).collect();
    let mut up2 = vec![0.0; n];
    let mut low: Vec<f64> = off.to_vec();
    for i in 0..n.saturating_sub(1) {
        if low[i].abs() > main[i].abs() {
            // swap rows i and i+1
            let (m0, u0, w0) = (main[i], up1[i], up2[i]);
            main[i] = low[i];
            up1[i] = main[i + 1];
            up2[i] = up1[i + 1];
            low[i] = m0;
            main[i + 1] = u0;
            up1[i + 1] = w0;
            b.swap(i, i + 1);
        }
        if main[i].abs() < tiny {
            main[i] = tiny;
        }
        let f = low[i] / main[i];
        main[i + 1] -= f * up1[i];
        up1[i + 1] -= f * up2[i];
        b[i + 1] -= f * b[i];
    }
    if n > 0 && main[n - 1].abs() < tiny {
        main[n - 1] = tiny;
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        if i + 1 < n {
            s -= up1[i] * b[i + 1];
        }
        if i + 2 < n {
            s -= up2[i] * b[i + 2];
        }
        b[i] = s / main[i];
    }
}

fn normalize(x: &mut [f64]) -> f64 {
    let norm = libm::sqrt(dot(x, x));
    if norm > 0.0 {
        x.iter_mut().for_each(|v| *v /= norm);
    }
    norm
}

/// The `k` largest eigenvalues (descending) of a symmetric matrix and their
/// orthonormal eigenvectors as the columns of an `n × k` matrix.
pub fn symmetric_top_k(matrix: DenseMatrix, k: usize, seed: u64) -> Result<(Vec<f64>, DenseMatrix)> {
    let n = matrix.rows();
    if matrix.cols() != n {
        return Err(Error::dim("symmetric_top_k", format!("{}x{} is not square", n, matrix.cols())));
    }
    if n > DENSE_LIMIT {
        return Err(Error::Capability(format!(
            "dense eigendecomposition limited to {DENSE_LIMIT} nodes, got {n}"
        )));
    }
    if k == 0 || k > n {
        return Err(Error::contract(format!("cannot take {k} eigenpairs of an order-{n} matrix")));
    }
    if !matrix.is_finite() {
        return Err(Error::Numeric { op: "symmetric_top_k" });
    }
    let t = tridiagonalize(matrix);
    let mut values = tridiagonal_eigenvalues(&t.diag, &t.off)?;
    values.sort_by(|a, b| b.total_cmp(a));
    values.truncate(k);

    let scale = t
        .diag
        .iter()
        .map(|d| d.abs())
        .chain(t.off.iter().map(|e| 2.0 * e.abs()))
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let tiny = f64::EPSILON * scale;
    let cluster_gap = 1e-6 * scale;
    let mut r = rng::seeded(seed);
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(k);
    for (idx, &lambda) in values.iter().enumerate() {
        let mut x: Vec<f64> = (0..n).map(|_| r.random::<f64>() - 0.5).collect();
        normalize(&mut x);
        // earlier vectors with (nearly) the same eigenvalue
        let group: Vec<usize> = (0..idx).filter(|&j| (values[j] - lambda).abs() <= cluster_gap).collect();
        for _ in 0..4 {
            tridiagonal_solve(&t.diag, &t.off, lambda, &mut x, tiny);
            for &j in &group {
                let proj = dot(&x, &vectors[j]);
                x.iter_mut().zip(&vectors[j]).for_each(|(a, b)| *a -= proj * b);
            }
            if normalize(&mut x) == 0.0 {
                x = (0..n).map(|_| r.random::<f64>() - 0.5).collect();
                normalize(&mut x);
            }
        }
        vectors.push(x);
    }

    // back to the original basis: x ← H_0 H_1 … H_{n-3} y
    let mut out = DenseMatrix::zeros(n, k);
    for (c, mut y) in vectors.into_iter().enumerate() {
        for (kk, v) in t.reflectors.iter().enumerate().rev() {
            if v.is_empty() {
                continue;
            }
            let tail = &mut y[kk + 1..];
            let s = 2.0 * dot(tail, v);
            tail.iter_mut().zip(v).for_each(|(a, b)| *a -= s * b);
        }
        for (i, &val) in y.iter().enumerate() {
            out.set(i, c, val);
        }
    }
    Ok((values, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual(a: &DenseMatrix, values: &[f64], vecs: &DenseMatrix) -> f64 {
        let av = a.matmul(vecs).unwrap();
        let mut worst: f64 = 0.0;
        for c in 0..values.len() {
            for i in 0..a.rows() {
                worst = worst.max((av.get(i, c) - values[c] * vecs.get(i, c)).abs());
            }
        }
        worst
    }

    #[test]
    fn diagonal_matrix() {
        let mut a = DenseMatrix::zeros(4, 4);
        for (i, v) in [3.0, -1.0, 7.0, 2.0].iter().enumerate() {
            a.set(i, i, *v);
        }
        let (vals, vecs) = symmetric_top_k(a.clone(), 2, 0).unwrap();
        assert_eq!(vals, [7.0, 3.0]);
        assert!(residual(&a, &vals, &vecs) < 1e-10);
    }

    #[test]
    fn random_symmetric_matrix() {
        let mut r = rng::seeded(11);
        let n = 30;
        let mut a = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v: f64 = r.random::<f64>() - 0.5;
                a.set(i, j, v);
                a.set(j, i, v);
            }
        }
        let (vals, vecs) = symmetric_top_k(a.clone(), 5, 1).unwrap();
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
        assert!(residual(&a, &vals, &vecs) < 1e-9);
        let gram = vecs.t_matmul(&vecs).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram.get(i, j) - want).abs() < 1e-9);
            }
        }
        // trace check against all eigenvalues
        let (all, _) = symmetric_top_k(a.clone(), n, 2).unwrap();
        let trace: f64 = (0..n).map(|i| a.get(i, i)).sum();
        assert!((all.iter().sum::<f64>() - trace).abs() < 1e-10);
    }

    #[test]
    fn repeated_eigenvalue_gives_orthogonal_vectors() {
        // two disjoint triangles: eigenvalue 2 twice
        let mut a = DenseMatrix::zeros(6, 6);
        for &(i, j) in &[(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)] {
            a.set(i, j, 1.0);
            a.set(j, i, 1.0);
        }
        let (vals, vecs) = symmetric_top_k(a.clone(), 2, 4).unwrap();
        assert!((vals[0] - 2.0).abs() < 1e-12 && (vals[1] - 2.0).abs() < 1e-12);
        assert!(residual(&a, &vals, &vecs) < 1e-10);
        let g = vecs.t_matmul(&vecs).unwrap();
        assert!(g.get(0, 1).abs() < 1e-10);
    }

    #[test]
    fn zero_rows_deflate() {
        // normalized adjacency of a path with isolated nodes interleaved
        let n = 40;
        let mut a = DenseMatrix::zeros(n, n);
        let live: Vec<usize> = (0..n).filter(|i| i % 3 != 0).collect();
        for w in live.windows(2) {
            a.set(w[0], w[1], 0.5);
            a.set(w[1], w[0], 0.5);
        }
        let (vals, vecs) = symmetric_top_k(a.clone(), n, 3).unwrap();
        assert!(vals.iter().all(|v| v.is_finite()));
        assert!(residual(&a, &vals, &vecs) < 1e-9);
    }

    #[test]
    fn bad_requests() {
        assert!(symmetric_top_k(DenseMatrix::zeros(2, 3), 1, 0).is_err());
        assert!(symmetric_top_k(DenseMatrix::identity(2), 3, 0).is_err());
    }
}
