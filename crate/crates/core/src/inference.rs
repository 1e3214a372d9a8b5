//! Stationary-bootstrap tests for differences in variance and Sharpe ratio
//! between two paired return series.
//!
//! Replicate `r` draws from `ChaCha8Rng::seed_from_u64(seed)` on stream `r`,
//! so results do not depend on thread scheduling. The p-value is two-sided
//! on the centered bootstrap distribution:
//! `(1 + #{|stat* - stat| >= |stat|}) / (B + 1)`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::backtest::sharpe_ratio;
use crate::error::{Error, Result};

pub const MIN_TEST_LENGTH: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapConfig {
    pub n_samples: usize,
    /// Mean block length of the stationary bootstrap.
    pub mean_block: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            mean_block: 5.0,
            seed: 0,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::InvalidConfig("bootstrap needs at least one sample".into()));
        }
        if !(self.mean_block >= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "mean block length {} is below 1",
                self.mean_block
            )));
        }
        Ok(())
    }

    fn replicate_rng(&self, replicate: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(replicate as u64);
        rng
    }
}

/// Fills `out` with one stationary-bootstrap index sequence over `[0, len)`.
fn fill_indices(out: &mut [usize], len: usize, mean_block: f64, rng: &mut impl Rng) {
    let restart = 1.0 / mean_block;
    let mut idx = rng.random_range(0..len);
    for (k, slot) in out.iter_mut().enumerate() {
        if k > 0 {
            idx = if rng.random::<f64>() < restart {
                rng.random_range(0..len)
            } else {
                (idx + 1) % len
            };
        }
        *slot = idx;
    }
}

/// The index sequence of replicate `replicate`.
pub fn bootstrap_indices(len: usize, config: &BootstrapConfig, replicate: usize) -> Result<Vec<usize>> {
    if len == 0 {
        return Err(Error::SeriesTooShort { required: 1, actual: 0 });
    }
    config.validate()?;
    let mut out = vec![0; len];
    fill_indices(&mut out, len, config.mean_block, &mut config.replicate_rng(replicate));
    Ok(out)
}

/// The index sequence of the first replicate.
pub fn stationary_bootstrap_indices(len: usize, config: &BootstrapConfig) -> Result<Vec<usize>> {
    bootstrap_indices(len, config, 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

impl TestResult {
    pub fn stars(&self) -> &'static str {
        stars(self.p_value)
    }
}

/// `*`, `**`, `***` below 0.1, 0.05, 0.01.
pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

fn variance(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < MIN_TEST_LENGTH {
        return Err(Error::SeriesTooShort {
            required: MIN_TEST_LENGTH,
            actual: a.len(),
        });
    }
    if variance(a) == 0.0 || variance(b) == 0.0 {
        return Err(Error::ZeroDispersion);
    }
    Ok(())
}

fn bootstrap_test<F>(a: &[f64], b: &[f64], config: &BootstrapConfig, statistic: F) -> Result<TestResult>
where
    F: Fn(&[f64], &[f64]) -> f64 + Sync,
{
    check_pair(a, b)?;
    config.validate()?;
    let observed = statistic(a, b);
    let len = a.len();
    let exceed: usize = (0..config.n_samples)
        .into_par_iter()
        .map_init(
            || (vec![0usize; len], vec![0.0; len], vec![0.0; len]),
            |(idx, ra, rb), r| {
                fill_indices(idx, len, config.mean_block, &mut config.replicate_rng(r));
                for (k, &i) in idx.iter().enumerate() {
                    ra[k] = a[i];
                    rb[k] = b[i];
                }
                let s = statistic(ra, rb);
                // A degenerate resample (e.g. zero variance) never counts
                // as evidence against the null.
                usize::from(!s.is_finite() || (s - observed).abs() >= observed.abs())
            },
        )
        .sum();
    let p_value = (1 + exceed) as f64 / (config.n_samples + 1) as f64;
    Ok(TestResult {
        statistic: observed,
        p_value: p_value.clamp(0.0, 1.0),
    })
}

/// Tests equal variance through `log(var_a / var_b)`.
pub fn variance_equality_test(a: &[f64], b: &[f64], config: &BootstrapConfig) -> Result<TestResult> {
    bootstrap_test(a, b, config, |x, y| (variance(x) / variance(y)).ln())
}

/// Tests equal Sharpe ratio through `sharpe_a - sharpe_b`.
pub fn sharpe_difference_test(a: &[f64], b: &[f64], config: &BootstrapConfig) -> Result<TestResult> {
    bootstrap_test(a, b, config, |x, y| match (sharpe_ratio(x, None), sharpe_ratio(y, None)) {
        (Ok(sx), Ok(sy)) => sx - sy,
        _ => f64::NAN,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestReportRow {
    pub strategy_pair: String,
    pub statistic: f64,
    pub p_value: f64,
    pub stars: String,
}

impl TestReportRow {
    pub fn new(pair: impl Into<String>, result: TestResult) -> Self {
        Self {
            strategy_pair: pair.into(),
            statistic: result.statistic,
            p_value: result.p_value,
            stars: result.stars().to_string(),
        }
    }
}

pub fn write_test_report<W: Write>(writer: W, rows: &[TestReportRow]) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record(["strategy_pair", "statistic", "p_value", "stars"])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn cfg(seed: u64) -> BootstrapConfig {
        BootstrapConfig {
            n_samples: 199,
            mean_block: 5.0,
            seed,
        }
    }

    fn normals(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn indices_stay_in_range_and_are_deterministic() {
        let c = cfg(7);
        let a = stationary_bootstrap_indices(50, &c).unwrap();
        assert!(a.iter().all(|&i| i < 50));
        assert_eq!(a, stationary_bootstrap_indices(50, &c).unwrap());
        assert_ne!(a, bootstrap_indices(50, &c, 1).unwrap());
        assert!(stationary_bootstrap_indices(0, &c).is_err());
    }

    #[test]
    fn unit_block_restarts_every_step() {
        // With b = 1 consecutive indices follow each other only by chance.
        let c = BootstrapConfig { mean_block: 1.0, ..cfg(3) };
        let idx = bootstrap_indices(10_000, &c, 0).unwrap();
        let runs = idx.windows(2).filter(|w| w[1] == (w[0] + 1) % 10_000).count();
        assert!(runs < 10);
    }

    #[test]
    fn mean_block_length_matches() {
        let c = cfg(11);
        let len = 100_000;
        let idx = bootstrap_indices(len, &c, 0).unwrap();
        let breaks = 1 + idx.windows(2).filter(|w| w[1] != (w[0] + 1) % len).count();
        let mean_block = len as f64 / breaks as f64;
        assert!((mean_block - 5.0).abs() < 0.25, "{mean_block}");
    }

    #[test]
    fn identical_series_are_an_exact_null() {
        let a = normals(100, 1);
        let v = variance_equality_test(&a, &a, &cfg(0)).unwrap();
        assert_eq!(v.statistic, 0.0);
        assert_eq!(v.p_value, 1.0);
        let s = sharpe_difference_test(&a, &a, &cfg(0)).unwrap();
        assert_eq!(s.statistic, 0.0);
        assert_eq!(s.p_value, 1.0);
    }

    #[test]
    fn preconditions() {
        let a = normals(100, 1);
        assert!(matches!(
            variance_equality_test(&a, &a[..50], &cfg(0)),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            variance_equality_test(&a[..5], &a[..5], &cfg(0)),
            Err(Error::SeriesTooShort { .. })
        ));
        assert!(matches!(
            variance_equality_test(&a, &[1.0; 100], &cfg(0)),
            Err(Error::ZeroDispersion)
        ));
    }

    #[test]
    fn star_thresholds() {
        assert_eq!(stars(0.2), "");
        assert_eq!(stars(0.1), "");
        assert_eq!(stars(0.099), "*");
        assert_eq!(stars(0.049), "**");
        assert_eq!(stars(0.0099), "***");
    }

    #[test]
    fn report_csv_layout() {
        let mut buf = Vec::new();
        let row = TestReportRow::new("ERSE-SAMPLE", TestResult { statistic: -0.5, p_value: 0.02 });
        write_test_report(&mut buf, &[row]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "strategy_pair,statistic,p_value,stars\nERSE-SAMPLE,-0.5,0.02,**\n"
        );
    }
}
