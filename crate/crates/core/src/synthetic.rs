//! One-factor synthetic market `r_t = beta f_t + e_t` with positive loadings,
//! used by Monte Carlo tests and benchmarks.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::panel::ReturnsPanel;

#[derive(Debug, Clone, PartialEq)]
pub struct FactorMarket {
    pub assets: usize,
    pub periods: usize,
    /// Loadings are drawn uniformly from this range.
    pub beta_range: (f64, f64),
    pub factor_mean: f64,
    pub factor_sd: f64,
    /// Idiosyncratic standard deviations are drawn uniformly from this range.
    pub idio_sd_range: (f64, f64),
}

impl Default for FactorMarket {
    /// Monthly percentage returns with a market-like common factor.
    fn default() -> Self {
        Self {
            assets: 50,
            periods: 600,
            beta_range: (0.5, 1.5),
            factor_mean: 0.6,
            factor_sd: 4.5,
            idio_sd_range: (2.0, 4.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticMarket {
    pub panel: ReturnsPanel,
    pub true_covariance: DMatrix<f64>,
    pub betas: DVector<f64>,
}

impl FactorMarket {
    pub fn new(assets: usize, periods: usize) -> Self {
        Self {
            assets,
            periods,
            ..Self::default()
        }
    }

    pub fn simulate(&self, seed: u64) -> Result<SyntheticMarket> {
        let (lo, hi) = self.beta_range;
        let (ilo, ihi) = self.idio_sd_range;
        if !(0.0 < lo && lo <= hi) || !(0.0 < ilo && ilo <= ihi) || !(self.factor_sd > 0.0) {
            return Err(Error::InvalidConfig("factor market needs positive ranges".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.assets;
        let betas = DVector::from_fn(n, |_, _| rng.random_range(lo..=hi));
        let idio = DVector::from_fn(n, |_, _| rng.random_range(ilo..=ihi));
        let factor = Normal::new(self.factor_mean, self.factor_sd)
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let mut returns = DMatrix::zeros(self.periods, n);
        for t in 0..self.periods {
            let f = factor.sample(&mut rng);
            for j in 0..n {
                let e: f64 = rng.sample(rand_distr::StandardNormal);
                returns[(t, j)] = betas[j] * f + idio[j] * e;
            }
        }
        let mut true_covariance = &betas * betas.transpose() * self.factor_sd.powi(2);
        for j in 0..n {
            true_covariance[(j, j)] += idio[j].powi(2);
        }
        let dates = (0..self.periods)
            .map(|t| format!("{}{:02}", 1970 + t / 12, t % 12 + 1))
            .collect();
        let assets = (0..n).map(|j| format!("A{j:02}")).collect();
        let panel = ReturnsPanel::new(format!("factor{seed}"), dates, assets, returns, "synthetic")?;
        Ok(SyntheticMarket {
            panel,
            true_covariance,
            betas,
        })
    }
}
