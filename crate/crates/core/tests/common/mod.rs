//! Shared generators and independent oracles for the integration suites.
#![allow(dead_code)]

pub mod criteria;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Correlation matrix of `B B' + D` with positive loadings `B` (n x k) and
/// positive idiosyncratic variances `D`, so every correlation is positive.
pub fn positive_correlation(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let k = rng.random_range(1..=3);
    let b = DMatrix::<f64>::from_fn(n, k, |_, _| rng.random_range(0.05..1.0));
    let mut s = &b * b.transpose();
    for i in 0..n {
        s[(i, i)] += rng.random_range(0.1..2.0);
    }
    let d = DVector::from_fn(n, |i, _| s[(i, i)].sqrt());
    let r = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { s[(i, j)] / (d[i] * d[j]) });
    (&r + r.transpose()) * 0.5
}

/// The fixed set of 200 matrices with `n` cycling through 3..=30.
pub fn matrix_suite(seed: u64) -> Vec<DMatrix<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..200).map(|i| positive_correlation(3 + i % 28, &mut rng)).collect()
}

/// Cyclic Jacobi eigensolver; eigenvalues ascending with matching columns.
pub fn jacobi_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)].powi(2))
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if m[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * m[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    (values, vectors)
}

fn t_of(q: &[f64]) -> f64 {
    q.iter().sum::<f64>().powi(2)
}

/// Follows the rotation loop literally: tangent-form angles, `theta_1` kept
/// when `|theta_1| <= |theta_2|`, eigenvalues from quadratic forms. Returns the
/// revised eigenvalues and the covariance rebuilt from the given standard
/// deviations. Uses plain `Vec`s and the Jacobi solver above.
pub fn brute_force_erse(r: &DMatrix<f64>, std: &[f64], delta: f64) -> (Vec<f64>, DMatrix<f64>) {
    let n = r.nrows();
    let (_, q0) = jacobi_eigen(r);
    let mut qs: Vec<Vec<f64>> = (0..n).map(|j| q0.column(j).iter().copied().collect()).collect();
    let argmin = |qs: &Vec<Vec<f64>>| (0..n).min_by(|&a, &b| t_of(&qs[a]).total_cmp(&t_of(&qs[b]))).unwrap();
    let argmax = |qs: &Vec<Vec<f64>>| (0..n).max_by(|&a, &b| t_of(&qs[a]).total_cmp(&t_of(&qs[b]))).unwrap();
    let mut imin = argmin(&qs);
    // The 1e-12 slack stops re-rotating a vector whose degree landed a
    // rounding error below the threshold.
    while t_of(&qs[imin]) < delta - 1e-12 {
        let imax = argmax(&qs);
        let s1: f64 = qs[imin].iter().sum();
        let s2: f64 = qs[imax].iter().sum();
        let root = (delta * (s1 * s1 + s2 * s2 - delta)).sqrt();
        let theta1 = ((-s1 * s2 + root) / (s2 * s2 - delta)).atan();
        let theta2 = ((-s1 * s2 - root) / (s2 * s2 - delta)).atan();
        let theta = if theta1.abs() <= theta2.abs() { theta1 } else { theta2 };
        let (c, s) = (theta.cos(), theta.sin());
        let a = qs[imin].clone();
        let b = qs[imax].clone();
        qs[imin] = a.iter().zip(&b).map(|(x, y)| c * x + s * y).collect();
        qs[imax] = a.iter().zip(&b).map(|(x, y)| -s * x + c * y).collect();
        imin = argmin(&qs);
    }
    let lambda: Vec<f64> = qs
        .iter()
        .map(|q| {
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    acc += q[i] * r[(i, j)] * q[j];
                }
            }
            acc
        })
        .collect();
    let sigma = DMatrix::from_fn(n, n, |i, j| {
        let core: f64 = (0..n).map(|k| q0[(i, k)] * lambda[k] * q0[(j, k)]).sum();
        std[i] * core * std[j]
    });
    (lambda, sigma)
}
