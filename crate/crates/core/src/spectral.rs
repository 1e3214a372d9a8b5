//! Sample moments, the spectral decomposition of the sample correlation
//! matrix, and the deviation degree of eigenvectors from the null space of
//! the uniform vector.

use std::cmp::Ordering;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// Eigenvalues in `[-CLAMP_WINDOW, 0)` are treated as roundoff and set to zero.
pub const CLAMP_WINDOW: f64 = 1e-8;

const SYMMETRY_TOL: f64 = 1e-10;
const UNIT_TOL: f64 = 1e-8;
const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITER: usize = 10_000;

/// Mean vector, covariance (L-1 denominator), standard deviations and
/// correlation of a window of returns.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMoments {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub std_diag: DVector<f64>,
    pub correlation: DMatrix<f64>,
}

impl SampleMoments {
    pub fn n(&self) -> usize {
        self.mean.len()
    }

    /// Builds moments from a covariance matrix directly. The mean is zero.
    pub fn from_covariance(covariance: DMatrix<f64>) -> Result<Self> {
        let n = covariance.nrows();
        check_symmetric(&covariance)?;
        let std_diag = DVector::from_fn(n, |i, _| covariance[(i, i)].sqrt());
        if let Some(column) = std_diag.iter().position(|s| !(*s > 0.0)) {
            return Err(Error::ZeroVariance {
                column,
                asset: format!("#{column}"),
            });
        }
        let correlation = correlation_from(&covariance, &std_diag);
        Ok(Self {
            mean: DVector::zeros(n),
            covariance,
            std_diag,
            correlation,
        })
    }
}

fn correlation_from(cov: &DMatrix<f64>, std: &DVector<f64>) -> DMatrix<f64> {
    let n = cov.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            cov[(i, j)] / (std[i] * std[j])
        }
    })
}

/// Sample moments of a `L x n` window (rows are observations).
pub fn sample_moments(window: &DMatrix<f64>) -> Result<SampleMoments> {
    let (l, n) = window.shape();
    if l < 2 {
        return Err(Error::SeriesTooShort {
            required: 2,
            actual: l,
        });
    }
    let mean = DVector::from_fn(n, |j, _| window.column(j).mean());
    let centered = DMatrix::from_fn(l, n, |t, j| window[(t, j)] - mean[j]);
    let mut covariance = centered.tr_mul(&centered) / (l as f64 - 1.0);
    covariance = (&covariance + covariance.transpose()) * 0.5;
    let std_diag = DVector::from_fn(n, |i, _| covariance[(i, i)].sqrt());
    if let Some(column) = std_diag.iter().position(|s| !(*s > 0.0)) {
        return Err(Error::ZeroVariance {
            column,
            asset: format!("#{column}"),
        });
    }
    let correlation = correlation_from(&covariance, &std_diag);
    Ok(SampleMoments {
        mean,
        covariance,
        std_diag,
        correlation,
    })
}

/// Largest `|a_ij - a_ji|` relative to the largest absolute entry.
fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / scale
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::InvalidConfig(format!(
            "matrix is {}x{}, not square",
            m.nrows(),
            m.ncols()
        )));
    }
    let a = asymmetry(m);
    if a > SYMMETRY_TOL {
        return Err(Error::NotSymmetric { asymmetry: a });
    }
    Ok(())
}

/// Eigen-decomposition of the sample correlation matrix, eigenvalues
/// ascending, eigenvectors sign-normalized toward the uniform vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralModel {
    pub moments: SampleMoments,
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralModel {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Column `i` of the eigenvector matrix.
    pub fn eigenvector(&self, i: usize) -> DVector<f64> {
        self.eigenvectors.column(i).into_owned()
    }
}

/// Flips `v` so that `1'v >= 0`; when the projection is exactly zero the
/// first nonzero component is made positive.
fn normalize_sign(v: &mut DVector<f64>) {
    let s = v.sum();
    let flip = if s != 0.0 {
        s < 0.0
    } else {
        v.iter().find(|x| **x != 0.0).is_some_and(|x| *x < 0.0)
    };
    if flip {
        v.neg_mut();
    }
}

/// Symmetric eigen-decomposition sorted ascending with sign-normalized
/// columns. Returns `(eigenvalues, eigenvectors)` without clamping.
pub(crate) fn sorted_eigen(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    let eig = m
        .clone()
        .try_symmetric_eigen(EIGEN_EPS, EIGEN_MAX_ITER)
        .ok_or(Error::EigenNonConvergence)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap_or(Ordering::Equal)
    });
    let values = DVector::from_fn(n, |i, _| eig.eigenvalues[order[i]]);
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &src) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(src).into_owned();
        v /= v.norm();
        normalize_sign(&mut v);
        vectors.set_column(k, &v);
    }
    Ok((values, vectors))
}

/// Eigenvalues of a symmetric matrix, ascending.
pub(crate) fn sorted_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let eig = m
        .clone()
        .try_symmetric_eigen(EIGEN_EPS, EIGEN_MAX_ITER)
        .ok_or(Error::EigenNonConvergence)?;
    let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    Ok(v)
}

pub fn spectral_decompose(moments: &SampleMoments) -> Result<SpectralModel> {
    let r = &moments.correlation;
    check_symmetric(r)?;
    if let Some(i) = (0..r.nrows()).find(|&i| (r[(i, i)] - 1.0).abs() > 1e-12) {
        return Err(Error::InvalidConfig(format!(
            "correlation diagonal entry {i} is {}, not 1",
            r[(i, i)]
        )));
    }
    let (mut values, vectors) = sorted_eigen(r)?;
    for v in values.iter_mut() {
        if *v < -CLAMP_WINDOW {
            return Err(Error::NegativeEigenvalue(*v));
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(SpectralModel {
        moments: moments.clone(),
        eigenvalues: values,
        eigenvectors: vectors,
    })
}

/// Squared projection of a unit vector onto the uniform vector, `(1'x)^2`.
pub fn deviation_degree(x: &DVector<f64>) -> Result<f64> {
    let norm = x.norm();
    if (norm - 1.0).abs() > UNIT_TOL {
        return Err(Error::NotUnit { norm });
    }
    Ok(projection_sq(x))
}

/// `(1'x)^2` without the unit-norm check.
#[inline]
pub(crate) fn projection_sq(x: &DVector<f64>) -> f64 {
    let s = x.sum();
    s * s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationProfile {
    pub degrees: Vec<f64>,
    pub total: f64,
}

pub fn deviation_profile(model: &SpectralModel) -> DeviationProfile {
    let degrees: Vec<f64> = model
        .eigenvectors
        .column_iter()
        .map(|c| {
            let s = c.sum();
            s * s
        })
        .collect();
    let total = degrees.iter().sum();
    DeviationProfile { degrees, total }
}

/// Mean of all entries of the correlation matrix, `1'R1 / n^2`.
pub fn mean_correlation(moments: &SampleMoments) -> f64 {
    let n = moments.n() as f64;
    moments.correlation.sum() / (n * n)
}

/// `lambda_max / lambda_min` of a symmetric positive definite matrix.
pub fn condition_number(matrix: &DMatrix<f64>) -> Result<f64> {
    check_symmetric(matrix)?;
    let values = sorted_eigenvalues(matrix)?;
    let (lo, hi) = (values[0], values[values.len() - 1]);
    if !(lo > 0.0) {
        return Err(Error::Singular { smallest: lo });
    }
    Ok(hi / lo)
}

/// Like [`condition_number`] but maps singular or indefinite input to
/// infinity instead of an error.
pub fn condition_number_or_inf(matrix: &DMatrix<f64>) -> f64 {
    match condition_number(matrix) {
        Ok(c) => c,
        Err(Error::Singular { .. }) => f64::INFINITY,
        Err(_) => f64::NAN,
    }
}

/// Evaluation of `T(q_n) >= lambda_n >= n M(R)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceCheck {
    pub t_max: f64,
    pub lambda_max: f64,
    pub n_m: f64,
    pub holds: bool,
    /// Whether every off-diagonal sample correlation is strictly positive.
    pub all_positive: bool,
}

pub fn dominance_check(model: &SpectralModel) -> DominanceCheck {
    const SLACK: f64 = 1e-8;
    let n = model.n();
    let r = &model.moments.correlation;
    let all_positive = (0..n).all(|i| (0..n).all(|j| i == j || r[(i, j)] > 0.0));
    let top = model.eigenvectors.column(n - 1);
    let s = top.sum();
    let t_max = s * s;
    let lambda_max = model.eigenvalues[n - 1];
    let n_m = n as f64 * mean_correlation(&model.moments);
    DominanceCheck {
        t_max,
        lambda_max,
        n_m,
        holds: t_max + SLACK >= lambda_max && lambda_max + SLACK >= n_m,
        all_positive,
    }
}

/// Upper bounds on the deviation degree of null-space eigenvectors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakFactorBounds {
    /// `n - max_i (1'rho_i)^2 / (rho_i'rho_i)`
    pub bound_rows: f64,
    /// `n - (1 + (n-1) b)^2 / (1 + (n-1) b^2)`
    pub bound_b: f64,
    /// `max_i min_j rho_ij`
    pub b: f64,
}

pub fn weak_factor_bounds(moments: &SampleMoments) -> WeakFactorBounds {
    let r = &moments.correlation;
    let n = r.nrows();
    let nf = n as f64;
    let best_row = r
        .column_iter()
        .map(|rho| {
            let s = rho.sum();
            s * s / rho.norm_squared()
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let b = r
        .row_iter()
        .map(|row| row.iter().copied().fold(f64::INFINITY, f64::min))
        .fold(f64::NEG_INFINITY, f64::max);
    let bound_b = nf - (1.0 + (nf - 1.0) * b).powi(2) / (1.0 + (nf - 1.0) * b * b);
    WeakFactorBounds {
        bound_rows: nf - best_row,
        bound_b,
        b,
    }
}

/// Writes an `n x n` matrix with asset names as header row and first column.
pub fn write_matrix_csv<W: Write>(writer: W, assets: &[String], m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let to_err = |source| Error::Csv {
        path: "<matrix>".into(),
        source,
    };
    let mut header = vec![String::new()];
    header.extend(assets.iter().cloned());
    w.write_record(&header).map_err(to_err)?;
    for (i, name) in assets.iter().enumerate() {
        let mut row = vec![name.clone()];
        row.extend(m.row(i).iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(to_err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: "<matrix>".into(),
        source,
    })
}

/// Correlation matrix with constant off-diagonal `rho`.
pub fn equicorrelation(n: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { rho })
}
