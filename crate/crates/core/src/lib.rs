//! Covariance estimation by paired eigenvector rotation, with comparison
//! estimators, minimum-variance portfolios, a rolling backtest, and
//! bootstrap inference.
//!
//! The central estimator works on the sample correlation matrix. Each
//! eigenvector `q` has a deviation degree `T(q) = (1'q)^2`. Eigenvectors whose
//! deviation degree falls below a threshold `delta` are rotated, one pair at a
//! time, against the eigenvector of largest deviation until every deviation
//! degree reaches `delta`. The rotated vectors give revised eigenvalues, and
//! the covariance is rebuilt from the original eigenvectors.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backtest;
pub mod baseline;
pub mod erse;
pub mod error;
pub mod inference;
pub mod panel;
pub mod portfolio;
pub mod rotation;
pub mod spectral;
pub mod strategy;
pub mod synthetic;

pub use backtest::{rolling_backtest, BacktestConfig, BacktestResult, Metrics, StrategyColumn};
pub use baseline::{lin1p_estimate, linc_estimate, sample_estimate, BaselineLabel};
pub use erse::{erse, CovarianceEstimate, ErseConfig, DEFAULT_DELTA};
pub use error::{Error, Result};
pub use inference::{BootstrapConfig, TestResult};
pub use panel::{load_returns_csv, synthesize_panel, MissingPolicy, ReturnsPanel};
pub use portfolio::{gmv_weights, WeightVector};
pub use rotation::{per, RotationStep};
pub use spectral::{deviation_degree, sample_moments, spectral_decompose, SampleMoments, SpectralModel};
pub use strategy::Strategy;
