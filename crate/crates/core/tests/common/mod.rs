#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

/// `A A^T / d + jitter I` with Gaussian `A`.
pub fn random_spd(rng: &mut ChaCha8Rng, d: usize, jitter: f64) -> DMatrix<f64> {
    let a = gaussian_mat(rng, d, d);
    let m = &a * a.transpose() / d as f64 + DMatrix::identity(d, d) * jitter;
    (&m + m.transpose()) * 0.5
}

/// Gauss-Jordan inverse with partial pivoting, kept separate from the
/// library's factorizations.
pub fn gj_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).map(|j| m[(i, j)]).collect();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        let inv = 1.0 / a[col][col];
        for v in a[col].iter_mut() {
            *v *= inv;
        }
        let pivot_row = a[col].clone();
        for (r, row) in a.iter_mut().enumerate() {
            if r != col {
                let factor = row[col];
                if factor != 0.0 {
                    for (v, p) in row.iter_mut().zip(&pivot_row) {
                        *v -= factor * p;
                    }
                }
            }
        }
    }
    DMatrix::from_fn(n, n, |i, j| a[i][n + j])
}

pub fn quad(m: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    let mut acc = 0.0;
    for i in 0..x.len() {
        for j in 0..x.len() {
            acc += x[i] * m[(i, j)] * x[j];
        }
    }
    acc
}

/// Cyclic Jacobi eigenvalues of a symmetric matrix, ascending.
pub fn jacobi_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut a = m.clone();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].powi(2))
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Rescales `u` so that `u^T P u = p`.
pub fn scale_to_p(precision: &DMatrix<f64>, u: &DVector<f64>, p: f64) -> DVector<f64> {
    let current = quad(precision, u);
    u * (p / current).sqrt()
}

/// O(n m) AUROC: pairs with ID above OOD count 1, ties 1/2.
pub fn brute_auroc(id: &[f64], ood: &[f64]) -> f64 {
    let mut twice = 0u64;
    for &a in id {
        for &b in ood {
            twice += if a > b {
                2
            } else if a == b {
                1
            } else {
                0
            };
        }
    }
    twice as f64 / (2 * id.len() * ood.len()) as f64
}

/// Exhaustive threshold scan: the largest candidate `tau` with
/// `#{id >= tau} / n >= target`, and the OOD fraction at or above it.
pub fn brute_fpr(id: &[f64], ood: &[f64], target: f64) -> (f64, f64) {
    let mut best: Option<f64> = None;
    for &tau in id.iter().chain(ood) {
        let tpr = id.iter().filter(|&&x| x >= tau).count() as f64 / id.len() as f64;
        if tpr >= target && best.is_none_or(|b| tau > b) {
            best = Some(tau);
        }
    }
    let tau = best.unwrap();
    let fpr = ood.iter().filter(|&&x| x >= tau).count() as f64 / ood.len() as f64;
    (fpr, tau)
}

/// Builds `(u, anchor)` with `u^T P u = p > 1`, `u^T P a = s` and `a^T P a`
/// at least `1 + (s-1)^2 / (p-1)` so that the second-branch condition holds.
pub fn second_branch_instance(
    r: &mut ChaCha8Rng,
    precision: &DMatrix<f64>,
    p: f64,
    s: f64,
    slack: f64,
) -> (DVector<f64>, DVector<f64>) {
    let d = precision.nrows();
    let u = scale_to_p(precision, &gaussian_vec(r, d), p);
    let pu = precision * &u;
    let z = gaussian_vec(r, d);
    let z_perp = &z - &u * (pu.dot(&z) / p);
    let z_perp = scale_to_p(precision, &z_perp, 1.0);
    let q_min = 1.0 + (s - 1.0).powi(2) / (p - 1.0);
    let q = (q_min + slack).max(s * s / p);
    let r2 = q - s * s / p;
    let anchor = &u * (s / p) + z_perp * r2.sqrt();
    (u, anchor)
}
