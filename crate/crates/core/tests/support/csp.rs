//! Brute-force generalized eigensolve for CSP on analytic covariances.

#![allow(dead_code)]

use biodecode::features::{csp_fit, shrink, CspConfig, DEFAULT_SHRINKAGE};
use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

pub const N: usize = 4;
pub const SAMPLES: usize = 256;

/// Cyclic Jacobi rotations until the off-diagonal mass vanishes.
pub fn jacobi_eigen(mut a: [[f64; N]; N]) -> ([f64; N], [[f64; N]; N]) {
    let mut v = [[0.0; N]; N];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _ in 0..100 {
        let off: f64 = (0..N)
            .flat_map(|i| (0..N).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..N {
            for q in p + 1..N {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..N {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..N {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vkp, vkq) = (row[p], row[q]);
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut vals = [0.0; N];
    for i in 0..N {
        vals[i] = a[i][i];
    }
    (vals, v)
}

pub fn cholesky(a: &Array2<f64>) -> [[f64; N]; N] {
    let mut l = [[0.0; N]; N];
    for i in 0..N {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                l[i][i] = (a[[i, i]] - s).sqrt();
            } else {
                l[i][j] = (a[[i, j]] - s) / l[j][j];
            }
        }
    }
    l
}

/// Inverse of a lower-triangular matrix by forward substitution.
pub fn lower_inverse(l: &[[f64; N]; N]) -> [[f64; N]; N] {
    let mut inv = [[0.0; N]; N];
    for col in 0..N {
        for i in 0..N {
            let rhs = if i == col { 1.0 } else { 0.0 };
            let s: f64 = (0..i).map(|k| l[i][k] * inv[k][col]).sum();
            inv[i][col] = (rhs - s) / l[i][i];
        }
    }
    inv
}

/// Oracle generalized eigenpairs of `sa w = lambda (sa + sb) w`, descending,
/// with eigenvectors returned as filters.
pub fn oracle(sa: &Array2<f64>, sb: &Array2<f64>) -> Vec<(f64, [f64; N])> {
    let composite = sa + sb;
    let li = lower_inverse(&cholesky(&composite));
    let mut m = [[0.0; N]; N];
    for i in 0..N {
        for j in 0..N {
            let mut acc = 0.0;
            for k in 0..N {
                for l in 0..N {
                    acc += li[i][k] * sa[[k, l]] * li[j][l];
                }
            }
            m[i][j] = acc;
        }
    }
    let (vals, vecs) = jacobi_eigen(m);
    let mut pairs: Vec<(f64, [f64; N])> = (0..N)
        .map(|c| {
            // w = L^-T v
            let mut w = [0.0; N];
            for (i, wi) in w.iter_mut().enumerate() {
                *wi = (0..N).map(|k| li[k][i] * vecs[k][c]).sum();
            }
            (vals[c], w)
        })
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs
}

/// Zero-mean orthogonal rows with unit mean square: their sample covariance
/// is the identity exactly.
pub fn orthonormal_rows(offset: usize) -> Array2<f64> {
    Array2::from_shape_fn((N, SAMPLES), |(r, t)| {
        let k = (offset + r / 2 + 1) as f64;
        let phase = 2.0 * PI * k * t as f64 / SAMPLES as f64;
        2f64.sqrt() * if r % 2 == 0 { phase.cos() } else { phase.sin() }
    })
}

/// Trials whose sample covariance equals `cov` (up to rounding).
pub fn trials_with_covariance(cov: &Array2<f64>, count: usize) -> Vec<Array2<f64>> {
    let l = cholesky(cov);
    let l = Array2::from_shape_fn((N, N), |(i, j)| l[i][j]);
    (0..count).map(|i| l.dot(&orthonormal_rows(3 * i))).collect()
}

pub fn random_spd(rng: &mut ChaCha8Rng) -> Array2<f64> {
    let r = Array2::from_shape_fn((N, N), |_| rng.random_range(-1.0..1.0));
    r.dot(&r.t()) + Array2::<f64>::eye(N) * 0.3
}

pub fn dominant(w: &[f64]) -> (usize, f64) {
    let mut mags: Vec<(usize, f64)> = w.iter().map(|v| v.abs()).enumerate().collect();
    mags.sort_by(|a, b| b.1.total_cmp(&a.1));
    (mags[0].0, (mags[0].1 - mags[1].1) / mags[0].1)
}

/// Fits CSP on trials realizing the two covariances and compares with the
/// oracle; returns the largest eigenvalue deviation.
pub fn check_pair(cov_a: &Array2<f64>, cov_b: &Array2<f64>) -> Result<f64, String> {
    let a = trials_with_covariance(cov_a, 3);
    let b = trials_with_covariance(cov_b, 3);
    let va: Vec<ArrayView2<'_, f64>> = a.iter().map(|x| x.view()).collect();
    let vb: Vec<ArrayView2<'_, f64>> = b.iter().map(|x| x.view()).collect();
    let fit = csp_fit(&va, &vb, &CspConfig { m: 2, shrinkage: DEFAULT_SHRINKAGE }).map_err(|e| e.to_string())?;

    let na = cov_a / cov_a.diag().sum();
    let nb = cov_b / cov_b.diag().sum();
    let expected = oracle(&shrink(&na, DEFAULT_SHRINKAGE), &shrink(&nb, DEFAULT_SHRINKAGE));

    let mut worst: f64 = 0.0;
    for (got, want) in fit.all_eigenvalues.iter().zip(&expected) {
        worst = worst.max((got - want.0).abs());
    }
    if worst >= 1e-6 {
        return Err(format!("eigenvalue deviation {worst:e}"));
    }
    let rows = [0, 1, N - 2, N - 1];
    for (row, &r) in fit.projection.rows().into_iter().zip(&rows) {
        let want = &expected[r];
        // Eigenvectors of a repeated eigenvalue are not unique.
        let isolated = (0..N)
            .filter(|&o| o != r)
            .all(|o| (expected[o].0 - want.0).abs() > 1e-6);
        if !isolated {
            continue;
        }
        let (idx, gap) = dominant(&want.1);
        if gap > 1e-6 && dominant(row.as_slice().unwrap()).0 != idx {
            return Err(format!("filter {r}: dominant coefficient differs from oracle"));
        }
        // Same filter up to sign.
        let dot: f64 = row.iter().zip(&want.1).map(|(x, y)| x * y).sum();
        let nr: f64 = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nw: f64 = want.1.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (dot.abs() / (nr * nw) - 1.0).abs() >= 1e-6 {
            return Err(format!("filter {r}: direction differs from oracle"));
        }
    }
    Ok(worst)
}
