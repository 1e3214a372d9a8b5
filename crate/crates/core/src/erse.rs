//! The eigenvector rotation shrinkage estimator.
//!
//! Starting from the sample eigenvectors of the correlation matrix, the
//! eigenvector with the smallest deviation degree is repeatedly rotated
//! against the one with the largest until every deviation degree reaches
//! `delta`. The quadratic forms of the rotated vectors become the revised
//! eigenvalues, which are recombined with the *sample* eigenvectors and
//! standard deviations:
//!
//! ```text
//! Sigma_hat = D Q diag(lambda_hat) Q' D
//! ```

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rotation::{per, RotationStep, PAIR_FEASIBILITY_TOL};
use crate::spectral::{condition_number_or_inf, spectral_decompose, SampleMoments, SpectralModel};

pub const DEFAULT_DELTA: f64 = 0.25;

/// Threshold band that performed best across the empirical datasets.
pub const RECOMMENDED_DELTA_BAND: (f64, f64) = (0.15, 0.35);

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErseConfig {
    /// Minimum deviation degree required of every eigenvector.
    pub delta: f64,
    /// Slack in the loop test `T < delta - tolerance`.
    pub tolerance: f64,
    /// Cap on rotations; `None` means `n - 1`.
    pub max_iterations: Option<usize>,
}

impl Default for ErseConfig {
    fn default() -> Self {
        Self {
            delta: DEFAULT_DELTA,
            tolerance: 1e-12,
            max_iterations: None,
        }
    }
}

impl ErseConfig {
    pub fn with_delta(delta: f64) -> Self {
        Self {
            delta,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(Error::InvalidConfig(format!(
                "delta = {} must lie in [0, 1]",
                self.delta
            )));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tolerance = {} must be non-negative",
                self.tolerance
            )));
        }
        Ok(())
    }
}

/// A fitted covariance matrix together with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub label: String,
    pub covariance: DMatrix<f64>,
    /// Revised correlation eigenvalues, aligned with the sample eigenvector
    /// columns. Empty for estimators outside the rotation-equivariant class.
    pub eigenvalues_hat: DVector<f64>,
    /// Deviation degrees of the rotated eigenvectors (ERSE only).
    pub deviation: Vec<f64>,
    pub rotation_trace: Vec<RotationStep>,
    pub condition_number: f64,
    pub iterations: usize,
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// `D Q diag(lambda) Q' D`, symmetrized.
pub fn reconstruct_covariance(
    std_diag: &DVector<f64>,
    eigenvectors: &DMatrix<f64>,
    eigenvalues: &DVector<f64>,
) -> DMatrix<f64> {
    let mut scaled = eigenvectors.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= eigenvalues[j];
    }
    let core = scaled * eigenvectors.transpose();
    let n = std_diag.len();
    let sigma = DMatrix::from_fn(n, n, |i, j| std_diag[i] * core[(i, j)] * std_diag[j]);
    (&sigma + sigma.transpose()) * 0.5
}

pub fn erse(moments: &SampleMoments, config: &ErseConfig) -> Result<CovarianceEstimate> {
    config.validate()?;
    let model = spectral_decompose(moments)?;
    erse_from_model(&model, config)
}

/// Runs the rotation loop on an existing decomposition.
pub fn erse_from_model(model: &SpectralModel, config: &ErseConfig) -> Result<CovarianceEstimate> {
    config.validate()?;
    let n = model.n();
    let delta = config.delta;
    let cap = config.max_iterations.unwrap_or(n.saturating_sub(1));

    let mut rotated = model.eigenvectors.clone();
    let mut degrees: Vec<f64> = rotated
        .column_iter()
        .map(|c| {
            let s = c.sum();
            s * s
        })
        .collect();
    let mut forms: Vec<f64> = model.eigenvalues.iter().copied().collect();
    let mut trace = Vec::new();

    loop {
        let low = argmin(&degrees);
        if degrees[low] >= delta - config.tolerance {
            break;
        }
        let high = argmax(&degrees);
        let pair_sum = degrees[low] + degrees[high];
        if pair_sum < 2.0 * delta - PAIR_FEASIBILITY_TOL {
            return Err(Error::InfeasiblePair {
                iteration: trace.len(),
                pair_sum,
                delta,
                trace,
            });
        }
        if trace.len() >= cap {
            return Err(Error::IterationCap { cap, trace });
        }
        let q1 = rotated.column(low).into_owned();
        let q2 = rotated.column(high).into_owned();
        let (r1, r2, step) = per(&q1, &q2, delta, (forms[low], forms[high]), (low, high))?;
        rotated.set_column(low, &r1);
        rotated.set_column(high, &r2);
        degrees[low] = step.t_after[0];
        degrees[high] = step.t_after[1];
        forms[low] = step.lambda_after[0];
        forms[high] = step.lambda_after[1];
        trace.push(step);
    }

    let r = &model.moments.correlation;
    let eigenvalues_hat = DVector::from_fn(n, |i, _| {
        let q = rotated.column(i);
        (q.transpose() * r * q)[(0, 0)]
    });
    let covariance =
        reconstruct_covariance(&model.moments.std_diag, &model.eigenvectors, &eigenvalues_hat);
    let condition_number = condition_number_or_inf(&covariance);
    Ok(CovarianceEstimate {
        label: erse_label(delta),
        covariance,
        eigenvalues_hat,
        deviation: degrees,
        iterations: trace.len(),
        rotation_trace: trace,
        condition_number,
    })
}

/// `ERSE` at the default threshold, `ERSE(delta=x)` otherwise.
pub fn erse_label(delta: f64) -> String {
    if delta == DEFAULT_DELTA {
        "ERSE".to_string()
    } else {
        format!("ERSE(delta={delta})")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShrinkageRecord {
    pub step: usize,
    pub indices: (usize, usize),
    pub gamma: f64,
    pub lambda_before: [f64; 2],
    pub lambda_after: [f64; 2],
}

/// The pairwise linear shrinkage each rotation applied to the eigenvalues.
pub fn shrinkage_trace_report(estimate: &CovarianceEstimate) -> Vec<ShrinkageRecord> {
    estimate
        .rotation_trace
        .iter()
        .enumerate()
        .map(|(step, s)| ShrinkageRecord {
            step,
            indices: (s.index_low, s.index_high),
            gamma: s.gamma,
            lambda_before: s.lambda_before,
            lambda_after: s.lambda_after,
        })
        .collect()
}

/// One estimate per threshold; failures are reported per entry.
pub fn erse_delta_sweep(
    moments: &SampleMoments,
    deltas: &[f64],
) -> Result<Vec<Result<CovarianceEstimate>>> {
    if deltas.is_empty() {
        return Ok(Vec::new());
    }
    let model = spectral_decompose(moments)?;
    Ok(deltas
        .iter()
        .map(|&d| erse_from_model(&model, &ErseConfig::with_delta(d)))
        .collect())
}
