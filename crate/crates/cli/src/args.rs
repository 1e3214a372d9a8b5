use std::path::PathBuf;
use std::str::FromStr;

use clap::builder::NonEmptyStringValueParser;
use clap::{Args, Parser, Subcommand};
use ersecov_core::baseline::UNIMPLEMENTED_LABELS;
use ersecov_core::strategy::{Strategy, IMPLEMENTED_LABELS};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "ersecov", version, about = "Eigenvector rotation shrinkage covariance experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rolling mean/minimum correlation series and a per-dataset summary.
    ReportCorr(ReportCorrArgs),
    /// Fit estimators on the trailing window and dump their outputs.
    Estimate(EstimateArgs),
    /// Rolling out-of-sample backtest with bootstrap tests against a reference.
    Backtest(BacktestArgs),
    /// Threshold and/or estimation-window sweeps in long CSV format.
    Sweep(SweepArgs),
    /// Backtests on random asset subsets.
    Subsample(SubsampleArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CommonArgs {
    /// Returns CSV (`YYYYMM` date column, one column per asset). Repeat to
    /// combine datasets column-wise.
    #[arg(long = "input", required = true, value_parser = NonEmptyStringValueParser::new())]
    pub inputs: Vec<String>,
    /// Output directory.
    #[arg(long, env = "ERSECOV_OUT", default_value = "ersecov-out")]
    pub out: PathBuf,
    /// Seed for every randomized step.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Assets with more missing cells than this are dropped.
    #[arg(long, default_value_t = 10)]
    pub max_missing: usize,
}

/// An estimator label as typed, with its parsed strategy.
#[derive(Debug, Clone)]
pub struct EstimatorArg {
    pub raw: String,
    pub strategy: Strategy,
}

impl Serialize for EstimatorArg {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.raw)
    }
}

impl FromStr for EstimatorArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.parse::<Strategy>() {
            Ok(strategy) => Ok(Self {
                raw: s.to_string(),
                strategy,
            }),
            Err(ersecov_core::Error::UnknownLabel(_)) => Err(format!(
                "unknown estimator {s:?}; valid labels: {}; recognized but not implemented: {}",
                IMPLEMENTED_LABELS.join(", "),
                UNIMPLEMENTED_LABELS.join(", ")
            )),
            Err(e) => Err(e.to_string()),
        }
    }
}

impl EstimatorArg {
    /// The strategy with `delta` applied to ERSE labels that did not set one.
    pub fn resolve(&self, delta: Option<f64>) -> Strategy {
        match (&self.strategy, delta) {
            (Strategy::Erse(cfg), Some(d)) if !self.raw.to_ascii_lowercase().contains("delta") => {
                let mut cfg = *cfg;
                cfg.delta = d;
                Strategy::Erse(cfg)
            }
            (s, _) => s.clone(),
        }
    }
}

fn parse_delta(s: &str) -> Result<f64, String> {
    let d: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if (0.0..=1.0).contains(&d) {
        Ok(d)
    } else {
        Err(format!("delta {d} must lie in [0, 1]"))
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReportCorrArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Rolling window length in months.
    #[arg(long, default_value_t = 120)]
    pub window: usize,
    /// Also report the column-wise combination of all inputs.
    #[arg(long)]
    pub combine: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Estimator label, optionally with parameters (e.g. `ERSE:delta=0.3`).
    #[arg(long = "estimator", default_value = "ERSE")]
    pub estimators: Vec<EstimatorArg>,
    /// Trailing window length; the whole panel when omitted.
    #[arg(long)]
    pub window: Option<usize>,
    /// Threshold for ERSE labels without an explicit `delta`.
    #[arg(long, value_parser = parse_delta)]
    pub delta: Option<f64>,
    /// Also write the rotation steps as JSON lines.
    #[arg(long)]
    pub trace: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BacktestArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Strategies to compare; defaults to the full comparison table.
    #[arg(long = "estimator")]
    pub estimators: Vec<EstimatorArg>,
    #[arg(long, default_value_t = 120)]
    pub window: usize,
    /// 1-based index of the first out-of-sample month (default window + 1).
    #[arg(long)]
    pub start: Option<usize>,
    #[arg(long, value_parser = parse_delta)]
    pub delta: Option<f64>,
    /// Strategy every other strategy is tested against.
    #[arg(long, default_value = "ERSE")]
    pub reference: String,
    /// Bootstrap samples.
    #[arg(long = "B", default_value_t = 1000)]
    pub bootstrap_samples: usize,
    /// Mean block length of the stationary bootstrap.
    #[arg(long, default_value_t = 5.0)]
    pub block: f64,
    /// CSV with a date column and a risk-free column (named `RF`, or the
    /// second column) in the same units as the returns.
    #[arg(long)]
    pub risk_free: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Thresholds as `start:stop:step` or a comma list.
    #[arg(long)]
    pub deltas: Option<String>,
    /// Estimation windows as `start:stop:step` or a comma list.
    #[arg(long)]
    pub windows: Option<String>,
    /// Strategies reported alongside ERSE.
    #[arg(long = "estimator", default_values = ["SAMPLE", "LIN1P", "LINC", "ERSE"])]
    pub estimators: Vec<EstimatorArg>,
    /// Window for the threshold sweep.
    #[arg(long, default_value_t = 120)]
    pub window: usize,
    /// Common first out-of-sample month of the window sweep (default
    /// largest window + 1).
    #[arg(long)]
    pub start: Option<usize>,
    /// Threshold for ERSE in the window sweep.
    #[arg(long, value_parser = parse_delta)]
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SubsampleArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value_t = 150)]
    pub draws: usize,
    /// Assets per draw.
    #[arg(long)]
    pub subset: usize,
    #[arg(long = "estimator", default_values = ["SAMPLE", "LIN1P", "LINC", "ERSE"])]
    pub estimators: Vec<EstimatorArg>,
    #[arg(long, default_value_t = 120)]
    pub window: usize,
    #[arg(long)]
    pub start: Option<usize>,
    #[arg(long, value_parser = parse_delta)]
    pub delta: Option<f64>,
    #[arg(long, default_value = "ERSE")]
    pub reference: String,
}

/// Parses `start:stop:step` (inclusive of `stop` up to rounding) or `a,b,c`.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| format!("{s:?} is not a number"));
    match parts[..] {
        [start, stop, step] => {
            let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
            if step.is_nan() || step <= 0.0 || stop < start {
                return Err(format!("invalid range {spec:?}"));
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            // Rounded to 12 decimals so 0.05 steps print as 0.15, not 0.15000000000000002.
            Ok((0..count)
                .map(|k| ((start + k as f64 * step) * 1e12).round() / 1e12)
                .collect())
        }
        [_] => spec.split(',').map(num).collect(),
        _ => Err(format!("invalid grid {spec:?}")),
    }
}
