//! Portfolio weights: global minimum variance, equal weights, and the
//! unit-cost portfolio of an eigenvector.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectral::sorted_eigenvalues;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightVector {
    pub weights: Vec<f64>,
    pub strategy_label: String,
}

impl WeightVector {
    pub fn as_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.weights)
    }

    /// Realized return `w'r` for one period.
    pub fn apply(&self, returns: impl IntoIterator<Item = f64>) -> f64 {
        self.weights.iter().zip(returns).map(|(w, r)| w * r).sum()
    }
}

/// `Sigma^-1 1 / (1' Sigma^-1 1)` through a Cholesky solve.
pub fn gmv_weights(covariance: &DMatrix<f64>, label: &str) -> Result<WeightVector> {
    let n = covariance.nrows();
    let singular = || {
        let smallest = sorted_eigenvalues(covariance)
            .map(|v| v[0])
            .unwrap_or(f64::NAN);
        Error::Singular { smallest }
    };
    let chol = Cholesky::new(covariance.clone()).ok_or_else(singular)?;
    let ones = DVector::from_element(n, 1.0);
    let x = chol.solve(&ones);
    let denom = x.sum();
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(singular());
    }
    let w = &x / denom;
    // Residual of Sigma w = kappa 1 with kappa = 1 / (1' Sigma^-1 1).
    let kappa = 1.0 / denom;
    let residual = (covariance * &w - ones * kappa).norm();
    if residual > 1e-8 * covariance.norm().max(1.0) {
        return Err(singular());
    }
    Ok(WeightVector {
        weights: w.iter().copied().collect(),
        strategy_label: label.to_string(),
    })
}

pub fn ew_weights(n: usize) -> Result<WeightVector> {
    if n == 0 {
        return Err(Error::InvalidConfig("equal weights need n >= 1".into()));
    }
    Ok(WeightVector {
        weights: vec![1.0 / n as f64; n],
        strategy_label: "EW".to_string(),
    })
}

/// `q / (1'q)`; its squared norm is `1 / T(q)`.
pub fn unit_cost_portfolio(q: &DVector<f64>) -> Result<WeightVector> {
    let s = q.sum();
    if s.abs() <= 1e-12 {
        return Err(Error::ZeroProjection(s));
    }
    Ok(WeightVector {
        weights: q.iter().map(|x| x / s).collect(),
        strategy_label: "UNIT_COST".to_string(),
    })
}
