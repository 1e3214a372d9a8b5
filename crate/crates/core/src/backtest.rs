//! Rolling-window out-of-sample evaluation of portfolio strategies.
//!
//! At each out-of-sample period `t` every strategy is fitted on the `L`
//! rows immediately before `t`, and the realized return is `w'r_t`. The
//! window then advances by one period.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::panel::ReturnsPanel;
use crate::portfolio::WeightVector;
use crate::strategy::Strategy;

pub const DEFAULT_WINDOW: usize = 120;

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestConfig {
    /// Estimation window length `L`.
    pub window: usize,
    pub strategies: Vec<Strategy>,
    /// 1-based index of the first out-of-sample period; `None` means `L + 1`.
    pub start_index: Option<usize>,
    pub rng_seed: u64,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            strategies: vec![Strategy::Ew, Strategy::Sample, Strategy::Lin1p, Strategy::Linc, Strategy::erse_default()],
            start_index: None,
            rng_seed: 0,
        }
    }
}

impl BacktestConfig {
    pub fn start(&self) -> usize {
        self.start_index.unwrap_or(self.window + 1)
    }

    pub fn validate(&self, periods: usize) -> Result<()> {
        if self.window < 2 || self.window >= periods {
            return Err(Error::WindowOutOfRange {
                window: self.window,
                periods,
            });
        }
        let start = self.start();
        if start <= self.window || start > periods {
            return Err(Error::InvalidConfig(format!(
                "start index {start} must lie in ({}, {periods}]",
                self.window
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub oos_variance: f64,
    pub sharpe: Option<f64>,
    pub cond_mean: Option<f64>,
    pub cond_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ColumnStatus {
    Complete,
    /// At least one window failed; the first failure is kept.
    Failed { date: String, message: String },
    Unimplemented,
}

/// Everything one strategy produced over the out-of-sample period.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyColumn {
    pub label: String,
    pub status: ColumnStatus,
    /// Realized returns; `NaN` where the strategy failed.
    pub oos_returns: Vec<f64>,
    pub weights: Vec<Option<WeightVector>>,
    /// Condition numbers of the fitted estimates; `NaN` where none exists.
    pub conditions: Vec<f64>,
    pub metrics: Option<Metrics>,
}

impl StrategyColumn {
    /// The full return series, if every window succeeded.
    pub fn complete_returns(&self) -> Option<&[f64]> {
        matches!(self.status, ColumnStatus::Complete).then_some(self.oos_returns.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestResult {
    pub oos_dates: Vec<String>,
    pub columns: Vec<StrategyColumn>,
}

impl BacktestResult {
    pub fn column(&self, label: &str) -> Option<&StrategyColumn> {
        self.columns.iter().find(|c| c.label == label)
    }

    pub fn variance(&self, label: &str) -> Option<f64> {
        self.column(label)?.metrics.map(|m| m.oos_variance)
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Sample variance (length - 1 denominator).
pub fn oos_variance(returns: &[f64]) -> Result<f64> {
    if returns.len() < 2 {
        return Err(Error::SeriesTooShort {
            required: 2,
            actual: returns.len(),
        });
    }
    Ok(sample_variance(returns))
}

/// Mean excess return over its sample standard deviation. The risk-free
/// series defaults to zero.
pub fn sharpe_ratio(returns: &[f64], risk_free: Option<&[f64]>) -> Result<f64> {
    if returns.len() < 2 {
        return Err(Error::SeriesTooShort {
            required: 2,
            actual: returns.len(),
        });
    }
    let excess: Vec<f64> = match risk_free {
        Some(rf) => {
            if rf.len() != returns.len() {
                return Err(Error::LengthMismatch {
                    left: returns.len(),
                    right: rf.len(),
                });
            }
            returns.iter().zip(rf).map(|(r, f)| r - f).collect()
        }
        None => returns.to_vec(),
    };
    let m = mean(&excess);
    let sd = sample_variance(&excess).sqrt();
    if sd == 0.0 {
        // Identical excess returns that are all zero have no edge at all.
        if m == 0.0 && risk_free.is_some() {
            return Ok(0.0);
        }
        return Err(Error::ZeroDispersion);
    }
    Ok(m / sd)
}

fn metrics(returns: &[f64], conditions: &[f64]) -> Option<Metrics> {
    let oos_variance = oos_variance(returns).ok()?;
    let conds: Vec<f64> = conditions.iter().copied().filter(|c| !c.is_nan()).collect();
    let (cond_mean, cond_std) = if conds.len() >= 2 {
        (Some(mean(&conds)), Some(sample_variance(&conds).sqrt()))
    } else {
        (conds.first().copied(), None)
    };
    Some(Metrics {
        oos_variance,
        sharpe: sharpe_ratio(returns, None).ok(),
        cond_mean,
        cond_std,
    })
}

struct WindowOutcome {
    ret: f64,
    weights: WeightVector,
    condition: f64,
}

fn run_column(panel: &ReturnsPanel, strategy: &Strategy, window: usize, first: usize) -> StrategyColumn {
    let periods = panel.n_periods();
    let label = strategy.label();
    let len = periods - first;
    if !strategy.is_implemented() {
        return StrategyColumn {
            label,
            status: ColumnStatus::Unimplemented,
            oos_returns: vec![f64::NAN; len],
            weights: vec![None; len],
            conditions: vec![f64::NAN; len],
            metrics: None,
        };
    }
    let outcomes: Vec<Result<WindowOutcome>> = (first..periods)
        .into_par_iter()
        .map(|t| {
            let fit_window = panel.window(t - window, t);
            let (weights, estimate) = strategy.fit(&fit_window).map_err(|e| panel.name_asset(e))?;
            let ret = weights.apply(panel.returns().row(t).iter().copied());
            let condition = estimate.map_or(f64::NAN, |e| e.condition_number);
            Ok(WindowOutcome {
                ret,
                weights,
                condition,
            })
        })
        .collect();

    let mut status = ColumnStatus::Complete;
    let mut oos_returns = Vec::with_capacity(len);
    let mut weights = Vec::with_capacity(len);
    let mut conditions = Vec::with_capacity(len);
    for (k, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(o) => {
                oos_returns.push(o.ret);
                weights.push(Some(o.weights));
                conditions.push(o.condition);
            }
            Err(e) => {
                if matches!(status, ColumnStatus::Complete) {
                    status = ColumnStatus::Failed {
                        date: panel.dates()[first + k].clone(),
                        message: e.to_string(),
                    };
                }
                oos_returns.push(f64::NAN);
                weights.push(None);
                conditions.push(f64::NAN);
            }
        }
    }
    let metrics = match status {
        ColumnStatus::Complete => metrics(&oos_returns, &conditions),
        _ => None,
    };
    StrategyColumn {
        label,
        status,
        oos_returns,
        weights,
        conditions,
        metrics,
    }
}

pub fn rolling_backtest(panel: &ReturnsPanel, config: &BacktestConfig) -> Result<BacktestResult> {
    config.validate(panel.n_periods())?;
    let first = config.start() - 1;
    let columns = config
        .strategies
        .iter()
        .map(|s| run_column(panel, s, config.window, first))
        .collect();
    Ok(BacktestResult {
        oos_dates: panel.dates()[first..].to_vec(),
        columns,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub label: String,
    pub metrics: Option<Metrics>,
}

/// Metrics over the first and second half of the out-of-sample period. An
/// odd length puts the extra period in the first half.
pub fn subperiod_metrics(result: &BacktestResult) -> Result<(Vec<MetricRow>, Vec<MetricRow>)> {
    let len = result.oos_dates.len();
    if len < 4 {
        return Err(Error::SeriesTooShort {
            required: 4,
            actual: len,
        });
    }
    let split = len.div_ceil(2);
    let half = |range: std::ops::Range<usize>| {
        result
            .columns
            .iter()
            .map(|c| MetricRow {
                label: c.label.clone(),
                metrics: c
                    .complete_returns()
                    .and_then(|r| metrics(&r[range.clone()], &c.conditions[range.clone()])),
            })
            .collect::<Vec<_>>()
    };
    Ok((half(0..split), half(split..len)))
}

/// Summary of one strategy across random asset subsets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsampleSummary {
    pub label: String,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub max: Option<f64>,
    pub min: Option<f64>,
    /// Fraction of draws where the reference strategy's variance is strictly
    /// below this one's.
    pub win_rate: Option<f64>,
    /// Mean of `variance(this) - variance(reference)`.
    pub mean_difference: Option<f64>,
    /// Two-sided one-sample t-test p-value of the mean difference.
    pub md_p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsampleReport {
    pub reference: String,
    /// Per draw: the selected asset columns and each strategy's variance.
    pub draws: Vec<SubsampleDraw>,
    pub summary: Vec<SubsampleSummary>,
    /// Fraction of draws where the reference has the strictly lowest variance.
    pub reference_win_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsampleDraw {
    pub assets: Vec<usize>,
    pub variances: Vec<(String, Option<f64>)>,
}

fn t_test_p_value(diffs: &[f64]) -> Option<f64> {
    if diffs.len() < 2 {
        return None;
    }
    let m = mean(diffs);
    let sd = sample_variance(diffs).sqrt();
    if sd == 0.0 {
        return Some(if m == 0.0 { 1.0 } else { 0.0 });
    }
    let t = m / (sd / (diffs.len() as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, diffs.len() as f64 - 1.0).ok()?;
    Some((2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0))
}

pub fn random_subsample_experiment(
    panel: &ReturnsPanel,
    n_draws: usize,
    subset_size: usize,
    config: &BacktestConfig,
    reference: &str,
) -> Result<SubsampleReport> {
    let n = panel.n_assets();
    if subset_size > n || subset_size < 2 {
        return Err(Error::InvalidConfig(format!(
            "subset size {subset_size} must lie in [2, {n}]"
        )));
    }
    if n_draws == 0 {
        return Err(Error::InvalidConfig("need at least one draw".into()));
    }
    let labels: Vec<String> = config.strategies.iter().map(Strategy::label).collect();
    if !labels.iter().any(|l| l == reference) {
        return Err(Error::UnknownLabel(reference.to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut draws = Vec::with_capacity(n_draws);
    for _ in 0..n_draws {
        let mut assets = rand::seq::index::sample(&mut rng, n, subset_size).into_vec();
        assets.sort_unstable();
        let sub = panel.select_assets(&assets)?;
        let result = rolling_backtest(&sub, config)?;
        let variances = labels.iter().map(|l| (l.clone(), result.variance(l))).collect();
        draws.push(SubsampleDraw { assets, variances });
    }

    let var_of = |d: &SubsampleDraw, k: usize| d.variances[k].1;
    let ref_k = labels.iter().position(|l| l == reference).unwrap_or(0);
    let summary = labels
        .iter()
        .enumerate()
        .map(|(k, label)| {
            let vals: Vec<f64> = draws.iter().filter_map(|d| var_of(d, k)).collect();
            let complete = vals.len() == draws.len() && !vals.is_empty();
            let stat = |f: fn(&[f64]) -> f64| complete.then(|| f(&vals));
            let pairs: Vec<(f64, f64)> = draws
                .iter()
                .filter_map(|d| Some((var_of(d, k)?, var_of(d, ref_k)?)))
                .collect();
            let paired = k != ref_k && pairs.len() == draws.len() && complete;
            let diffs: Vec<f64> = pairs.iter().map(|(a, r)| a - r).collect();
            SubsampleSummary {
                label: label.clone(),
                mean: stat(mean),
                std: if vals.len() >= 2 && complete { Some(sample_variance(&vals).sqrt()) } else { None },
                max: stat(|v| v.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
                min: stat(|v| v.iter().copied().fold(f64::INFINITY, f64::min)),
                win_rate: paired
                    .then(|| pairs.iter().filter(|(a, r)| r < a).count() as f64 / pairs.len() as f64),
                mean_difference: paired.then(|| mean(&diffs)),
                md_p_value: if paired { t_test_p_value(&diffs) } else { None },
            }
        })
        .collect();

    let wins = draws
        .iter()
        .filter(|d| {
            let Some(r) = var_of(d, ref_k) else { return false };
            (0..labels.len())
                .filter(|&k| k != ref_k)
                .all(|k| var_of(d, k).is_none_or(|v| r < v))
        })
        .count();
    Ok(SubsampleReport {
        reference: reference.to_string(),
        draws,
        summary,
        reference_win_rate: wins as f64 / n_draws as f64,
    })
}

/// One backtest per estimation window, all starting at the same
/// out-of-sample period (`config.start_index`, default `max(windows) + 1`).
pub fn window_sweep(
    panel: &ReturnsPanel,
    windows: &[usize],
    config: &BacktestConfig,
) -> Result<Vec<(usize, BacktestResult)>> {
    let Some(&largest) = windows.iter().max() else {
        return Ok(Vec::new());
    };
    let start = config.start_index.unwrap_or(largest + 1);
    if let Some(&w) = windows.iter().find(|&&w| w >= start) {
        return Err(Error::InvalidConfig(format!(
            "window {w} does not fit before the common start {start}"
        )));
    }
    windows
        .iter()
        .map(|&w| {
            let cfg = BacktestConfig {
                window: w,
                start_index: Some(start),
                ..config.clone()
            };
            Ok((w, rolling_backtest(panel, &cfg)?))
        })
        .collect()
}
