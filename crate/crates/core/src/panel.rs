//! Return panels: loading Ken-French style CSV files, cleaning missing
//! observations, combining datasets and rolling correlation statistics.
//!
//! A file has a header row whose first cell labels the date column and whose
//! remaining cells are asset names. Every body row starts with a `YYYYMM`
//! date followed by one return (in percent) per asset.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectral::{sample_moments, SampleMoments};

/// How sentinel values in the source files are treated.
#[derive(Debug, Clone, PartialEq)]
pub struct MissingPolicy {
    /// Values treated as missing observations.
    pub missing_markers: Vec<f64>,
    /// Assets with strictly more missing cells than this are dropped.
    pub max_missing_per_asset: usize,
    /// Replacement for missing cells of retained assets.
    pub fill_value: f64,
}

impl Default for MissingPolicy {
    fn default() -> Self {
        Self {
            missing_markers: vec![-99.99, -999.0],
            max_missing_per_asset: 10,
            fill_value: 0.0,
        }
    }
}

impl MissingPolicy {
    fn validate(&self) -> Result<()> {
        if !self.fill_value.is_finite() {
            return Err(Error::InvalidPolicy(format!(
                "fill value {} is not finite",
                self.fill_value
            )));
        }
        Ok(())
    }

    fn is_missing(&self, value: f64) -> bool {
        self.missing_markers
            .iter()
            .any(|m| (value - m).abs() <= 1e-9 * m.abs().max(1.0))
    }
}

/// A dated `T x n` matrix of periodic returns in percent.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsPanel {
    name: String,
    dates: Vec<String>,
    assets: Vec<String>,
    returns: DMatrix<f64>,
    provenance: String,
}

impl ReturnsPanel {
    /// Builds a panel after checking the structural invariants.
    pub fn new(
        name: impl Into<String>,
        dates: Vec<String>,
        assets: Vec<String>,
        returns: DMatrix<f64>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        let (periods, n) = returns.shape();
        if periods != dates.len() || n != assets.len() {
            return Err(Error::InvalidConfig(format!(
                "returns matrix is {periods}x{n} but there are {} dates and {} assets",
                dates.len(),
                assets.len()
            )));
        }
        if n < 2 || periods < 2 {
            return Err(Error::PanelTooSmall { assets: n, periods });
        }
        check_dates(&dates)?;
        let mut seen = HashSet::with_capacity(n);
        for a in &assets {
            if !seen.insert(a.as_str()) {
                return Err(Error::DuplicateAsset(a.clone()));
            }
        }
        if let Some(idx) = returns.iter().position(|v| !v.is_finite()) {
            let (row, column) = (idx % periods, idx / periods);
            return Err(Error::MalformedCell {
                row: row + 1,
                column: column + 1,
                header: assets[column].clone(),
                value: returns[(row, column)].to_string(),
            });
        }
        Ok(Self {
            name: name.into(),
            dates,
            assets,
            returns,
            provenance: provenance.into(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn n_periods(&self) -> usize {
        self.dates.len()
    }

    /// Rows `[start, end)` as an owned matrix.
    pub fn window(&self, start: usize, end: usize) -> DMatrix<f64> {
        self.returns.rows(start, end - start).into_owned()
    }

    /// Sample moments over the whole panel, naming the asset on failure.
    pub fn sample_moments(&self) -> Result<SampleMoments> {
        sample_moments(&self.returns).map_err(|e| self.name_asset(e))
    }

    /// Replaces a bare column index in a zero-variance error with the asset name.
    pub fn name_asset(&self, err: Error) -> Error {
        match err {
            Error::ZeroVariance { column, .. } => Error::ZeroVariance {
                column,
                asset: self.assets[column].clone(),
            },
            other => other,
        }
    }

    /// The panel restricted to the given asset columns, in the given order.
    pub fn select_assets(&self, columns: &[usize]) -> Result<Self> {
        let returns = self.returns.select_columns(columns);
        let assets = columns.iter().map(|&c| self.assets[c].clone()).collect();
        Self::new(
            self.name.clone(),
            self.dates.clone(),
            assets,
            returns,
            format!("{} [subset of {} assets]", self.provenance, columns.len()),
        )
    }

    /// The panel restricted to dates in `[from, to]` (inclusive, `YYYYMM`).
    pub fn select_dates(&self, from: &str, to: &str) -> Result<Self> {
        let first = self.dates.iter().position(|d| d.as_str() >= from);
        let last = self.dates.iter().rposition(|d| d.as_str() <= to);
        let (Some(first), Some(last)) = (first, last) else {
            return Err(Error::PanelTooSmall {
                assets: self.n_assets(),
                periods: 0,
            });
        };
        if last < first {
            return Err(Error::PanelTooSmall {
                assets: self.n_assets(),
                periods: 0,
            });
        }
        Self::new(
            self.name.clone(),
            self.dates[first..=last].to_vec(),
            self.assets.clone(),
            self.window(first, last + 1),
            format!("{} [{from}..{to}]", self.provenance),
        )
    }

    /// Writes the panel in the same CSV layout `load_returns_csv` reads.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let to_err = |source| Error::Csv {
            path: self.name.clone().into(),
            source,
        };
        let mut header = Vec::with_capacity(self.assets.len() + 1);
        header.push("date".to_string());
        header.extend(self.assets.iter().cloned());
        w.write_record(&header).map_err(to_err)?;
        for (t, date) in self.dates.iter().enumerate() {
            let mut row = Vec::with_capacity(self.assets.len() + 1);
            row.push(date.clone());
            row.extend(self.returns.row(t).iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(to_err)?;
        }
        w.flush().map_err(|source| Error::Io {
            path: self.name.clone().into(),
            source,
        })?;
        Ok(())
    }
}

fn parse_yyyymm(value: &str) -> Option<u32> {
    if value.len() != 6 || !value.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let v: u32 = value.parse().ok()?;
    let month = v % 100;
    (1..=12).contains(&month).then_some(v)
}

fn check_dates(dates: &[String]) -> Result<()> {
    let mut previous: Option<(u32, &str)> = None;
    for (i, d) in dates.iter().enumerate() {
        let key = parse_yyyymm(d).ok_or_else(|| Error::MalformedDate {
            row: i + 1,
            value: d.clone(),
        })?;
        if let Some((pk, pd)) = previous {
            if key <= pk {
                return Err(Error::NonMonotoneDates {
                    row: i + 1,
                    previous: pd.to_string(),
                    current: d.clone(),
                });
            }
        }
        previous = Some((key, d));
    }
    Ok(())
}

/// Loads a return panel, dropping assets with too many missing observations
/// and filling the remaining gaps.
pub fn load_returns_csv(path: impl AsRef<Path>, policy: &MissingPolicy) -> Result<ReturnsPanel> {
    let path = path.as_ref();
    policy.validate()?;
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let header = reader.headers().map_err(csv_err)?.clone();
    let raw_assets: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let width = raw_assets.len();

    let mut dates = Vec::new();
    // Column-major: one vector of Option<f64> per raw asset.
    let mut cells: Vec<Vec<Option<f64>>> = vec![Vec::new(); width];
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let row = i + 1;
        if record.iter().all(str::is_empty) {
            continue;
        }
        if record.len() != width + 1 {
            return Err(Error::RaggedRow {
                row,
                expected: width + 1,
                found: record.len(),
            });
        }
        dates.push(record[0].to_string());
        for (j, cell) in record.iter().skip(1).enumerate() {
            let value = if cell.is_empty() {
                None
            } else {
                let v: f64 = cell.parse().map_err(|_| Error::MalformedCell {
                    row,
                    column: j + 2,
                    header: raw_assets[j].clone(),
                    value: cell.to_string(),
                })?;
                if !v.is_finite() {
                    return Err(Error::MalformedCell {
                        row,
                        column: j + 2,
                        header: raw_assets[j].clone(),
                        value: cell.to_string(),
                    });
                }
                (!policy.is_missing(v)).then_some(v)
            };
            cells[j].push(value);
        }
    }
    check_dates(&dates)?;

    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (j, column) in cells.iter().enumerate() {
        let missing = column.iter().filter(|c| c.is_none()).count();
        if missing > policy.max_missing_per_asset {
            dropped.push(raw_assets[j].clone());
        } else {
            kept.push(j);
        }
    }
    if kept.len() < 2 || dates.len() < 2 {
        return Err(Error::PanelTooSmall {
            assets: kept.len(),
            periods: dates.len(),
        });
    }

    let periods = dates.len();
    let returns = DMatrix::from_fn(periods, kept.len(), |t, k| {
        cells[kept[k]][t].unwrap_or(policy.fill_value)
    });
    let assets = kept.iter().map(|&j| raw_assets[j].clone()).collect();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "panel".to_string());
    let provenance = format!("{}; dropped: [{}]", path.display(), dropped.join(", "));
    ReturnsPanel::new(name, dates, assets, returns, provenance)
}

/// Concatenates panels with identical dates column-wise. Asset identifiers
/// are prefixed with the source panel name.
pub fn synthesize_panel(panels: &[ReturnsPanel]) -> Result<ReturnsPanel> {
    let first = panels
        .first()
        .ok_or_else(|| Error::InvalidConfig("no panels to combine".into()))?;
    for p in &panels[1..] {
        let (a, b) = (first.dates(), p.dates());
        if a != b {
            let position = a
                .iter()
                .zip(b)
                .position(|(x, y)| x != y)
                .unwrap_or(a.len().min(b.len()));
            return Err(Error::DateMismatch {
                position,
                left: a.get(position).cloned(),
                right: b.get(position).cloned(),
            });
        }
    }
    let total: usize = panels.iter().map(ReturnsPanel::n_assets).sum();
    let periods = first.n_periods();
    let mut returns = DMatrix::zeros(periods, total);
    let mut assets = Vec::with_capacity(total);
    let mut offset = 0;
    for p in panels {
        returns
            .columns_mut(offset, p.n_assets())
            .copy_from(p.returns());
        assets.extend(p.assets().iter().map(|a| format!("{}.{}", p.name(), a)));
        offset += p.n_assets();
    }
    let name = panels
        .iter()
        .map(ReturnsPanel::name)
        .collect::<Vec<_>>()
        .join("+");
    let provenance = panels
        .iter()
        .map(|p| format!("({})", p.provenance()))
        .collect::<Vec<_>>()
        .join(" + ");
    ReturnsPanel::new(name, first.dates.clone(), assets, returns, provenance)
}

/// Mean and minimum off-diagonal correlation over one trailing window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationRecord {
    pub date: String,
    pub mean_corr: f64,
    pub min_corr: f64,
    /// Pairs left out because one of the assets was constant in the window.
    pub skipped_pairs: usize,
}

/// Rolling mean/minimum pairwise correlation. The record dated at period
/// `t` is computed from the `window` rows strictly before `t`.
pub fn rolling_correlation_report(
    panel: &ReturnsPanel,
    window: usize,
) -> Result<Vec<CorrelationRecord>> {
    let periods = panel.n_periods();
    if window < 2 || window > periods {
        return Err(Error::WindowOutOfRange { window, periods });
    }
    let n = panel.n_assets();
    let mut out = Vec::with_capacity(periods - window);
    for t in window..periods {
        let block = panel.returns().rows(t - window, window);
        let means: Vec<f64> = (0..n).map(|j| block.column(j).mean()).collect();
        let centered = DMatrix::from_fn(window, n, |i, j| block[(i, j)] - means[j]);
        let cross = centered.tr_mul(&centered);
        let (mut sum, mut count, mut min, mut skipped) = (0.0, 0usize, f64::INFINITY, 0usize);
        for i in 0..n {
            for j in (i + 1)..n {
                let denom = (cross[(i, i)] * cross[(j, j)]).sqrt();
                if denom <= 0.0 {
                    skipped += 1;
                    continue;
                }
                let r = (cross[(i, j)] / denom).clamp(-1.0, 1.0);
                sum += r;
                count += 1;
                min = min.min(r);
            }
        }
        let (mean_corr, min_corr) = if count == 0 {
            (f64::NAN, f64::NAN)
        } else {
            (sum / count as f64, min)
        };
        out.push(CorrelationRecord {
            date: panel.dates()[t].clone(),
            mean_corr,
            min_corr,
            skipped_pairs: skipped,
        });
    }
    Ok(out)
}

/// Full-sample dataset characteristics in the layout of a summary table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PanelSummary {
    pub dataset: String,
    pub assets: usize,
    pub months: usize,
    pub average_mean: f64,
    pub average_variance: f64,
    pub max_corr: f64,
    pub mean_corr: f64,
    pub min_corr: f64,
}

pub fn panel_summary(panel: &ReturnsPanel) -> Result<PanelSummary> {
    let m = panel.sample_moments()?;
    let n = panel.n_assets();
    let (mut max, mut min, mut sum) = (f64::NEG_INFINITY, f64::INFINITY, 0.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let r = m.correlation[(i, j)];
            max = max.max(r);
            min = min.min(r);
            sum += r;
        }
    }
    Ok(PanelSummary {
        dataset: panel.name().to_string(),
        assets: n,
        months: panel.n_periods(),
        average_mean: m.mean.mean(),
        average_variance: m.covariance.diagonal().mean(),
        max_corr: max,
        mean_corr: sum / (n * (n - 1) / 2) as f64,
        min_corr: min,
    })
}
