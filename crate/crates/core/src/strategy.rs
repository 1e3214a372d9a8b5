//! Portfolio strategies evaluated by the backtest: equal weights, or GMV
//! weights built from one of the covariance estimators.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::baseline::{lin1p_estimate, linc_estimate, sample_estimate, UNIMPLEMENTED_LABELS};
use crate::erse::{erse, erse_label, CovarianceEstimate, ErseConfig};
use crate::error::{Error, Result};
use crate::portfolio::{ew_weights, gmv_weights, WeightVector};
use crate::spectral::sample_moments;

#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    Ew,
    Sample,
    Lin1p,
    Linc,
    Erse(ErseConfig),
    /// A comparison estimator that is recognized but not provided.
    Unimplemented(&'static str),
}

/// Labels accepted by [`Strategy::from_str`] that produce results.
pub const IMPLEMENTED_LABELS: [&str; 5] = ["SAMPLE", "EW", "LIN1P", "LINC", "ERSE"];

impl Strategy {
    pub fn erse_default() -> Self {
        Self::Erse(ErseConfig::default())
    }

    /// The row order of the comparison tables.
    pub fn table_layout() -> Vec<Strategy> {
        let mut v = vec![Self::Ew, Self::Sample, Self::Lin1p];
        v.push(Self::Unimplemented("LIN2P"));
        v.push(Self::Linc);
        for l in ["LIND", "LINM", "GIS", "LIS", "QIS"] {
            v.push(Self::Unimplemented(l));
        }
        v.push(Self::erse_default());
        v
    }

    pub fn label(&self) -> String {
        match self {
            Self::Ew => "EW".into(),
            Self::Sample => "SAMPLE".into(),
            Self::Lin1p => "LIN1P".into(),
            Self::Linc => "LINC".into(),
            Self::Erse(c) => erse_label(c.delta),
            Self::Unimplemented(l) => (*l).into(),
        }
    }

    pub fn is_implemented(&self) -> bool {
        !matches!(self, Self::Unimplemented(_))
    }

    /// Fits the covariance estimate on an `L x n` window. Equal weights have
    /// no estimate and return `None`.
    pub fn estimate(&self, window: &DMatrix<f64>) -> Result<Option<CovarianceEstimate>> {
        Ok(Some(match self {
            Self::Ew => return Ok(None),
            Self::Sample => sample_estimate(&sample_moments(window)?),
            Self::Lin1p => lin1p_estimate(window)?,
            Self::Linc => linc_estimate(window)?,
            Self::Erse(cfg) => erse(&sample_moments(window)?, cfg)?,
            Self::Unimplemented(l) => return Err(Error::Unimplemented((*l).into())),
        }))
    }

    /// Portfolio weights fitted on the window, with the estimate when one exists.
    pub fn fit(&self, window: &DMatrix<f64>) -> Result<(WeightVector, Option<CovarianceEstimate>)> {
        match self.estimate(window)? {
            None => Ok((ew_weights(window.ncols())?, None)),
            Some(est) => {
                let w = gmv_weights(&est.covariance, &self.label())?;
                Ok((w, Some(est)))
            }
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Parses `LABEL[:key=value,...]`, case-insensitively. ERSE accepts
/// `delta`, `tol` and `max_iter`.
impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (label, params) = match s.split_once(':') {
            Some((l, p)) => (l.trim(), Some(p)),
            None => (s.trim(), None),
        };
        let upper = label.to_ascii_uppercase();
        let mut pairs = Vec::new();
        if let Some(p) = params {
            for kv in p.split(',').filter(|kv| !kv.trim().is_empty()) {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| Error::InvalidConfig(format!("parameter {kv:?} is not key=value")))?;
                pairs.push((k.trim().to_ascii_lowercase(), v.trim().to_string()));
            }
        }
        let no_params = |st: Strategy| {
            if pairs.is_empty() {
                Ok(st)
            } else {
                Err(Error::InvalidConfig(format!("{upper} takes no parameters")))
            }
        };
        match upper.as_str() {
            "EW" => no_params(Self::Ew),
            "SAMPLE" | "SAM" => no_params(Self::Sample),
            "LIN1P" => no_params(Self::Lin1p),
            "LINC" => no_params(Self::Linc),
            "ERSE" => {
                let mut cfg = ErseConfig::default();
                for (k, v) in &pairs {
                    let bad = || Error::InvalidConfig(format!("bad value {v:?} for {k}"));
                    match k.as_str() {
                        "delta" => cfg.delta = v.parse().map_err(|_| bad())?,
                        "tol" | "tolerance" => cfg.tolerance = v.parse().map_err(|_| bad())?,
                        "max_iter" | "max_iterations" => {
                            cfg.max_iterations = Some(v.parse().map_err(|_| bad())?)
                        }
                        _ => return Err(Error::InvalidConfig(format!("unknown ERSE parameter {k:?}"))),
                    }
                }
                cfg.validate()?;
                Ok(Self::Erse(cfg))
            }
            other => match UNIMPLEMENTED_LABELS.iter().find(|l| **l == other) {
                Some(l) => no_params(Self::Unimplemented(l)),
                None => Err(Error::UnknownLabel(s.to_string())),
            },
        }
    }
}
