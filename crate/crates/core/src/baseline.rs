//! Comparison estimators: the sample covariance and linear shrinkage toward
//! a scaled identity (LIN1P) or a constant-correlation matrix (LINC).
//!
//! Shrinkage intensities use the plug-in form
//! `clip(pi_hat / (L * gamma_hat), 0, 1)` where
//! `pi_hat = (1/L) sum_t ||x_t x_t' - S||_F^2` over demeaned observations and
//! `gamma_hat = ||S - F||_F^2`. The covariance-of-target correction of the
//! constant-correlation estimator is omitted.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::erse::CovarianceEstimate;
use crate::error::{Error, Result};
use crate::spectral::{condition_number_or_inf, sample_moments, SampleMoments};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineLabel {
    Sample,
    Lin1p,
    Linc,
}

impl BaselineLabel {
    pub const ALL: [BaselineLabel; 3] = [Self::Sample, Self::Lin1p, Self::Linc];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Sample => "SAMPLE",
            Self::Lin1p => "LIN1P",
            Self::Linc => "LINC",
        }
    }
}

impl fmt::Display for BaselineLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownLabel(s.to_string()))
    }
}

/// Labels of comparison estimators that are recognized but not provided.
pub const UNIMPLEMENTED_LABELS: [&str; 6] = ["LIN2P", "LIND", "LINM", "GIS", "LIS", "QIS"];

fn estimate(label: &str, covariance: DMatrix<f64>) -> CovarianceEstimate {
    let condition_number = condition_number_or_inf(&covariance);
    CovarianceEstimate {
        label: label.to_string(),
        covariance,
        eigenvalues_hat: DVector::zeros(0),
        deviation: Vec::new(),
        rotation_trace: Vec::new(),
        condition_number,
        iterations: 0,
    }
}

pub fn sample_estimate(moments: &SampleMoments) -> CovarianceEstimate {
    estimate(BaselineLabel::Sample.as_str(), moments.covariance.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShrinkageTarget {
    /// `mu I` with `mu = trace(S) / n`.
    ScaledIdentity,
    /// Sample variances with the mean sample correlation off the diagonal.
    ConstantCorrelation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearShrinkage {
    pub covariance: DMatrix<f64>,
    pub target: DMatrix<f64>,
    pub intensity: f64,
}

/// `clip(pi / (L gamma), 0, 1)`; a zero distance to the target gives 1.
pub fn shrinkage_intensity(pi_hat: f64, gamma_hat: f64, observations: usize) -> f64 {
    if gamma_hat <= 0.0 {
        return 1.0;
    }
    let raw = pi_hat / (observations as f64 * gamma_hat);
    if raw.is_nan() {
        0.0
    } else {
        raw.clamp(0.0, 1.0)
    }
}

fn target_matrix(m: &SampleMoments, target: ShrinkageTarget) -> DMatrix<f64> {
    let s = &m.covariance;
    let n = s.nrows();
    match target {
        ShrinkageTarget::ScaledIdentity => {
            let mu = s.trace() / n as f64;
            DMatrix::from_diagonal_element(n, n, mu)
        }
        ShrinkageTarget::ConstantCorrelation => {
            let r = &m.correlation;
            let pairs = (n * (n - 1)) as f64;
            let r_bar = if n > 1 { (r.sum() - n as f64) / pairs } else { 0.0 };
            DMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    s[(i, i)]
                } else {
                    r_bar * m.std_diag[i] * m.std_diag[j]
                }
            })
        }
    }
}

/// Linear shrinkage of the sample covariance of an `L x n` window.
pub fn linear_shrinkage(window: &DMatrix<f64>, target: ShrinkageTarget) -> Result<LinearShrinkage> {
    let (l, n) = window.shape();
    let m = sample_moments(window)?;
    let s = &m.covariance;
    let f = target_matrix(&m, target);

    let s_norm2 = s.norm_squared();
    let mut pi_hat = 0.0;
    let mut x = DVector::zeros(n);
    for t in 0..l {
        for j in 0..n {
            x[j] = window[(t, j)] - m.mean[j];
        }
        let xx = x.norm_squared();
        let quad = (x.transpose() * s * &x)[(0, 0)];
        pi_hat += xx * xx - 2.0 * quad + s_norm2;
    }
    pi_hat /= l as f64;
    let gamma_hat = (s - &f).norm_squared();
    let intensity = shrinkage_intensity(pi_hat, gamma_hat, l);

    let mut covariance = &f * intensity + s * (1.0 - intensity);
    if target == ShrinkageTarget::ConstantCorrelation {
        for i in 0..n {
            covariance[(i, i)] = s[(i, i)];
        }
    }
    Ok(LinearShrinkage {
        covariance,
        target: f,
        intensity,
    })
}

pub fn lin1p_estimate(window: &DMatrix<f64>) -> Result<CovarianceEstimate> {
    let fit = linear_shrinkage(window, ShrinkageTarget::ScaledIdentity)?;
    Ok(estimate(BaselineLabel::Lin1p.as_str(), fit.covariance))
}

pub fn linc_estimate(window: &DMatrix<f64>) -> Result<CovarianceEstimate> {
    let fit = linear_shrinkage(window, ShrinkageTarget::ConstantCorrelation)?;
    Ok(estimate(BaselineLabel::Linc.as_str(), fit.covariance))
}
