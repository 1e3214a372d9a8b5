use std::collections::{HashMap, HashSet};
use std::path::Path;

use anyhow::{bail, Context, Result};
use ersecov_core::backtest::{
    random_subsample_experiment, rolling_backtest, sharpe_ratio, subperiod_metrics, window_sweep,
    BacktestConfig, BacktestResult, ColumnStatus, Metrics,
};
use ersecov_core::erse::{DEFAULT_DELTA, RECOMMENDED_DELTA_BAND};
use ersecov_core::inference::{
    sharpe_difference_test, stars, variance_equality_test, write_test_report, BootstrapConfig, TestReportRow,
};
use ersecov_core::panel::{
    load_returns_csv, panel_summary, rolling_correlation_report, synthesize_panel, MissingPolicy, ReturnsPanel,
};
use ersecov_core::portfolio::gmv_weights;
use ersecov_core::spectral::{sample_moments, spectral_decompose, write_matrix_csv};
use ersecov_core::strategy::Strategy;
use serde::Serialize;

use crate::args::{
    parse_grid, BacktestArgs, CommonArgs, EstimateArgs, EstimatorArg, ReportCorrArgs, SubsampleArgs, SweepArgs,
};
use crate::output::{digest_file, file_label, fmt_cell, fmt_opt, InputDigest, Manifest, OutputDir};

fn load_panels(common: &CommonArgs) -> Result<(Vec<ReturnsPanel>, Vec<InputDigest>)> {
    let policy = MissingPolicy {
        max_missing_per_asset: common.max_missing,
        ..MissingPolicy::default()
    };
    let mut panels = Vec::new();
    let mut digests = Vec::new();
    for path in &common.inputs {
        digests.push(digest_file(path)?);
        panels.push(load_returns_csv(path, &policy).with_context(|| format!("cannot load {path}"))?);
        let p = panels.last().expect("just pushed");
        if p.provenance().contains("dropped: [") && !p.provenance().ends_with("dropped: []") {
            eprintln!("note: {}", p.provenance());
        }
    }
    Ok((panels, digests))
}

/// One panel from all inputs; several inputs are combined column-wise.
fn load_panel(common: &CommonArgs) -> Result<(ReturnsPanel, Vec<InputDigest>)> {
    let (panels, digests) = load_panels(common)?;
    let panel = if panels.len() == 1 {
        panels.into_iter().next().expect("one panel")
    } else {
        synthesize_panel(&panels)?
    };
    Ok((panel, digests))
}

fn resolve_all(estimators: &[EstimatorArg], delta: Option<f64>) -> Result<Vec<Strategy>> {
    let strategies: Vec<Strategy> = estimators.iter().map(|e| e.resolve(delta)).collect();
    let mut seen = HashSet::new();
    for s in &strategies {
        if !seen.insert(s.label()) {
            bail!("estimator {} is listed twice", s.label());
        }
    }
    Ok(strategies)
}

/// The column label of the reference strategy after applying `--delta`.
fn reference_label(reference: &str, delta: Option<f64>, strategies: &[Strategy]) -> Result<String> {
    let arg: EstimatorArg = reference.parse().map_err(anyhow::Error::msg)?;
    let label = arg.resolve(delta).label();
    if !strategies.iter().any(|s| s.label() == label) {
        bail!("reference strategy {label} is not among the estimators");
    }
    Ok(label)
}

fn erse_deltas(strategies: &[Strategy]) -> Vec<(String, f64)> {
    strategies
        .iter()
        .filter_map(|s| match s {
            Strategy::Erse(c) => Some((s.label(), c.delta)),
            _ => None,
        })
        .collect()
}

pub fn report_corr(args: &ReportCorrArgs) -> Result<bool> {
    let (panels, digests) = load_panels(&args.common)?;
    let mut out = OutputDir::create(&args.common.out)?;
    let mut list = panels.clone();
    if args.combine && panels.len() > 1 {
        list.push(synthesize_panel(&panels)?);
    }
    let mut summaries = Vec::new();
    let mut used = HashSet::new();
    for (k, p) in list.iter().enumerate() {
        let records = rolling_correlation_report(p, args.window)?;
        let mut stem = file_label(p.name());
        if !used.insert(stem.clone()) {
            stem = format!("{stem}_{k}");
        }
        let header = ["date", "mean_corr", "min_corr", "skipped_pairs"].map(String::from);
        let rows: Vec<Vec<String>> = records
            .iter()
            .map(|r| {
                vec![
                    r.date.clone(),
                    fmt_cell(r.mean_corr),
                    fmt_cell(r.min_corr),
                    r.skipped_pairs.to_string(),
                ]
            })
            .collect();
        out.write_table(&format!("corr_{stem}.csv"), &header, &rows)?;
        summaries.push(panel_summary(p)?);
    }
    out.write_rows("summary.csv", &summaries)?;
    let manifest = Manifest::new("report-corr", args.common.seed, args, digests)?;
    out.finish(manifest)?;
    Ok(true)
}

#[derive(Serialize)]
struct EstimateSummary {
    estimator: String,
    status: String,
    delta: String,
    condition_number: String,
    iterations: String,
}

pub fn estimate(args: &EstimateArgs) -> Result<bool> {
    let (panel, digests) = load_panel(&args.common)?;
    let strategies = resolve_all(&args.estimators, args.delta)?;
    let periods = panel.n_periods();
    let window_len = args.window.unwrap_or(periods);
    if window_len < 2 || window_len > periods {
        bail!("window {window_len} must lie in [2, {periods}]");
    }
    let window = panel.window(periods - window_len, periods);
    let moments = sample_moments(&window).map_err(|e| panel.name_asset(e))?;
    let model = spectral_decompose(&moments)?;
    let assets = panel.assets().to_vec();
    let mut out = OutputDir::create(&args.common.out)?;
    let mut summary = Vec::new();
    let mut all_ok = true;

    for strategy in &strategies {
        let label = strategy.label();
        let stem = file_label(&label);
        let delta = match strategy {
            Strategy::Erse(c) => c.delta.to_string(),
            _ => "N/A".into(),
        };
        let mut row = EstimateSummary {
            estimator: label.clone(),
            status: "ok".into(),
            delta,
            condition_number: "N/A".into(),
            iterations: "N/A".into(),
        };
        let estimate = match strategy.estimate(&window) {
            Ok(e) => e,
            Err(e) => {
                eprintln!("{label}: {e}");
                row.status = e.to_string();
                summary.push(row);
                all_ok = false;
                continue;
            }
        };
        let weights = match &estimate {
            None => ersecov_core::portfolio::ew_weights(assets.len()),
            Some(e) => gmv_weights(&e.covariance, &label),
        };
        if let Some(est) = &estimate {
            out.write_with(&format!("cov_{stem}.csv"), |w| Ok(write_matrix_csv(w, &assets, &est.covariance)?))?;
            row.condition_number = est.condition_number.to_string();
            row.iterations = est.iterations.to_string();
            let revised: Option<(Vec<f64>, Vec<f64>)> = match strategy {
                Strategy::Erse(_) => Some((est.eigenvalues_hat.iter().copied().collect(), est.deviation.clone())),
                Strategy::Sample => Some((
                    model.eigenvalues.iter().copied().collect(),
                    model.eigenvectors.column_iter().map(|c| c.sum().powi(2)).collect(),
                )),
                _ => None,
            };
            if let Some((lambda, degrees)) = revised {
                let header = ["index", "sample_eigenvalue", "estimated_eigenvalue"].map(String::from);
                let rows: Vec<Vec<String>> = (0..lambda.len())
                    .map(|i| vec![i.to_string(), model.eigenvalues[i].to_string(), lambda[i].to_string()])
                    .collect();
                out.write_table(&format!("eigenvalues_{stem}.csv"), &header, &rows)?;
                let header = ["index", "sample_deviation", "estimated_deviation"].map(String::from);
                let rows: Vec<Vec<String>> = (0..degrees.len())
                    .map(|i| {
                        let t = model.eigenvector(i).sum().powi(2);
                        vec![i.to_string(), t.to_string(), degrees[i].to_string()]
                    })
                    .collect();
                out.write_table(&format!("deviation_{stem}.csv"), &header, &rows)?;
            }
            if args.trace && matches!(strategy, Strategy::Erse(_)) {
                out.write_with(&format!("trace_{stem}.jsonl"), |w| {
                    for step in &est.rotation_trace {
                        serde_json::to_writer(&mut *w, step)?;
                        w.write_all(b"\n")?;
                    }
                    Ok(())
                })?;
            }
        }
        match weights {
            Ok(wv) => {
                let header = ["asset", "weight"].map(String::from);
                let rows: Vec<Vec<String>> = assets
                    .iter()
                    .zip(&wv.weights)
                    .map(|(a, w)| vec![a.clone(), w.to_string()])
                    .collect();
                out.write_table(&format!("weights_{stem}.csv"), &header, &rows)?;
            }
            Err(e) => {
                eprintln!("{label}: weights unavailable: {e}");
                row.status = format!("weights unavailable: {e}");
                all_ok = false;
            }
        }
        summary.push(row);
    }
    out.write_rows("summary.csv", &summary)?;
    let mut manifest = Manifest::new("estimate", args.common.seed, args, digests)?;
    manifest.note("window_rows", (periods - window_len + 1, periods))?;
    manifest.note("window_dates", (&panel.dates()[periods - window_len], &panel.dates()[periods - 1]))?;
    manifest.note("erse_delta", erse_deltas(&strategies))?;
    manifest.note("default_delta", DEFAULT_DELTA)?;
    out.finish(manifest)?;
    Ok(all_ok)
}

fn load_risk_free(path: &Path, dates: &[String]) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let column = headers.iter().position(|h| h.eq_ignore_ascii_case("rf")).unwrap_or(1);
    let mut by_date = HashMap::new();
    for record in reader.records() {
        let record = record?;
        let (Some(date), Some(value)) = (record.get(0), record.get(column)) else {
            continue;
        };
        let v: f64 = value
            .parse()
            .with_context(|| format!("bad risk-free value {value:?} on {date}"))?;
        by_date.insert(date.to_string(), v);
    }
    dates
        .iter()
        .map(|d| by_date.get(d).copied().with_context(|| format!("risk-free series has no value for {d}")))
        .collect()
}

fn status_text(status: &ColumnStatus) -> String {
    match status {
        ColumnStatus::Complete => "ok".into(),
        ColumnStatus::Failed { date, message } => format!("failed at {date}: {message}"),
        ColumnStatus::Unimplemented => "not implemented".into(),
    }
}

fn metric_cells(m: Option<Metrics>, sharpe: Option<f64>) -> Vec<String> {
    vec![
        fmt_opt(m.map(|m| m.oos_variance)),
        fmt_opt(sharpe),
        fmt_opt(m.and_then(|m| m.cond_mean)),
        fmt_opt(m.and_then(|m| m.cond_std)),
    ]
}

fn write_series(out: &mut OutputDir, name: &str, res: &BacktestResult, pick: fn(&ersecov_core::StrategyColumn) -> &Vec<f64>) -> Result<()> {
    let mut header = vec!["date".to_string()];
    header.extend(res.columns.iter().map(|c| c.label.clone()));
    let rows: Vec<Vec<String>> = res
        .oos_dates
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let mut row = vec![d.clone()];
            row.extend(res.columns.iter().map(|c| fmt_cell(pick(c)[k])));
            row
        })
        .collect();
    out.write_table(name, &header, &rows)
}

pub fn backtest(args: &BacktestArgs) -> Result<bool> {
    let (panel, mut digests) = load_panel(&args.common)?;
    let strategies = if args.estimators.is_empty() {
        Strategy::table_layout()
            .into_iter()
            .map(|s| match (s, args.delta) {
                (Strategy::Erse(mut c), Some(d)) => {
                    c.delta = d;
                    Strategy::Erse(c)
                }
                (s, _) => s,
            })
            .collect()
    } else {
        resolve_all(&args.estimators, args.delta)?
    };
    let reference = reference_label(&args.reference, args.delta, &strategies)?;
    let boot = BootstrapConfig {
        n_samples: args.bootstrap_samples,
        mean_block: args.block,
        seed: args.common.seed,
    };
    boot.validate()?;
    let cfg = BacktestConfig {
        window: args.window,
        strategies: strategies.clone(),
        start_index: args.start,
        rng_seed: args.common.seed,
    };
    let res = rolling_backtest(&panel, &cfg)?;
    let risk_free = match &args.risk_free {
        Some(p) => {
            digests.push(digest_file(&p.to_string_lossy())?);
            Some(load_risk_free(p, &res.oos_dates)?)
        }
        None => None,
    };
    let sharpe_of = |returns: &[f64]| sharpe_ratio(returns, risk_free.as_deref()).ok();

    let mut out = OutputDir::create(&args.common.out)?;
    let header = ["strategy", "oos_variance", "sharpe", "cond_mean", "cond_std", "status"].map(String::from);
    let rows: Vec<Vec<String>> = res
        .columns
        .iter()
        .map(|c| {
            if let ColumnStatus::Failed { .. } = c.status {
                eprintln!("{}: {}", c.label, status_text(&c.status));
            }
            let sharpe = c.complete_returns().and_then(sharpe_of);
            let mut row = vec![c.label.clone()];
            row.extend(metric_cells(c.metrics, sharpe));
            row.push(status_text(&c.status));
            row
        })
        .collect();
    out.write_table("metrics.csv", &header, &rows)?;
    write_series(&mut out, "oos_returns.csv", &res, |c| &c.oos_returns)?;
    write_series(&mut out, "conditions.csv", &res, |c| &c.conditions)?;

    let assets = panel.assets();
    out.write_with("weights.csv", |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["date", "strategy", "asset", "weight"])?;
        for c in &res.columns {
            for (k, wv) in c.weights.iter().enumerate() {
                let Some(wv) = wv else { continue };
                for (a, x) in assets.iter().zip(&wv.weights) {
                    csv.write_record([res.oos_dates[k].as_str(), c.label.as_str(), a, &x.to_string()])?;
                }
            }
        }
        csv.flush()?;
        Ok(())
    })?;

    let mut manifest = Manifest::new("backtest", args.common.seed, args, digests)?;
    match subperiod_metrics(&res) {
        Ok((first, second)) => {
            let split = res.oos_dates.len().div_ceil(2);
            let header = ["half", "start", "end", "strategy", "oos_variance", "sharpe", "cond_mean", "cond_std"]
                .map(String::from);
            let mut rows = Vec::new();
            for (half, metrics, range) in [(1, &first, 0..split), (2, &second, split..res.oos_dates.len())] {
                for (m, c) in metrics.iter().zip(&res.columns) {
                    let sharpe = c.complete_returns().and_then(|r| {
                        let rf = risk_free.as_ref().map(|rf| &rf[range.clone()]);
                        sharpe_ratio(&r[range.clone()], rf).ok()
                    });
                    let mut row = vec![
                        half.to_string(),
                        res.oos_dates[range.start].clone(),
                        res.oos_dates[range.end - 1].clone(),
                        m.label.clone(),
                    ];
                    row.extend(metric_cells(m.metrics, sharpe));
                    rows.push(row);
                }
            }
            out.write_table("subperiods.csv", &header, &rows)?;
        }
        Err(e) => manifest.note("subperiods", format!("skipped: {e}"))?,
    }

    let reference_col = res.column(&reference).expect("reference resolved above");
    let mut variance_rows = Vec::new();
    let mut sharpe_rows = Vec::new();
    let mut skipped = Vec::new();
    if let Some(ref_returns) = reference_col.complete_returns() {
        let excess = |r: &[f64]| -> Vec<f64> {
            match &risk_free {
                Some(rf) => r.iter().zip(rf).map(|(x, f)| x - f).collect(),
                None => r.to_vec(),
            }
        };
        let ref_excess = excess(ref_returns);
        for c in res.columns.iter().filter(|c| c.label != reference) {
            let Some(other) = c.complete_returns() else {
                skipped.push(c.label.clone());
                continue;
            };
            let pair = format!("{reference} vs {}", c.label);
            match variance_equality_test(ref_returns, other, &boot) {
                Ok(t) => variance_rows.push(TestReportRow::new(pair.clone(), t)),
                Err(e) => skipped.push(format!("{} (variance: {e})", c.label)),
            }
            match sharpe_difference_test(&ref_excess, &excess(other), &boot) {
                Ok(t) => sharpe_rows.push(TestReportRow::new(pair, t)),
                Err(e) => skipped.push(format!("{} (sharpe: {e})", c.label)),
            }
        }
    } else {
        skipped.push(format!("all: reference {reference} has no complete series"));
    }
    out.write_with("tests_variance.csv", |w| Ok(write_test_report(w, &variance_rows)?))?;
    out.write_with("tests_sharpe.csv", |w| Ok(write_test_report(w, &sharpe_rows)?))?;

    manifest.note("reference", &reference)?;
    manifest.note("erse_delta", erse_deltas(&strategies))?;
    manifest.note("start_index", cfg.start())?;
    manifest.note("oos_range", (res.oos_dates.first(), res.oos_dates.last()))?;
    manifest.note("tests_skipped", skipped)?;
    manifest.note("variance_statistic", "log(var_reference / var_other)")?;
    manifest.note("sharpe_statistic", "sharpe_reference - sharpe_other")?;
    out.finish(manifest)?;
    Ok(true)
}

#[derive(Serialize)]
struct SweepRow {
    parameter: &'static str,
    value: f64,
    strategy: String,
    oos_variance: String,
    sharpe: String,
    cond_mean: String,
    cond_std: String,
    oos_start: String,
    oos_end: String,
}

fn sweep_rows(parameter: &'static str, value: f64, res: &BacktestResult, rename: impl Fn(&str) -> String) -> Vec<SweepRow> {
    res.columns
        .iter()
        .map(|c| {
            let cells = metric_cells(c.metrics, c.metrics.and_then(|m| m.sharpe));
            SweepRow {
                parameter,
                value,
                strategy: rename(&c.label),
                oos_variance: cells[0].clone(),
                sharpe: cells[1].clone(),
                cond_mean: cells[2].clone(),
                cond_std: cells[3].clone(),
                oos_start: res.oos_dates.first().cloned().unwrap_or_default(),
                oos_end: res.oos_dates.last().cloned().unwrap_or_default(),
            }
        })
        .collect()
}

pub fn sweep(args: &SweepArgs) -> Result<bool> {
    if args.deltas.is_none() && args.windows.is_none() {
        bail!("give --deltas, --windows, or both");
    }
    let (panel, digests) = load_panel(&args.common)?;
    let mut rows = Vec::new();
    let mut manifest = Manifest::new("sweep", args.common.seed, args, digests)?;
    manifest.note("recommended_delta_band", RECOMMENDED_DELTA_BAND)?;

    if let Some(spec) = &args.deltas {
        let deltas = parse_grid(spec).map_err(anyhow::Error::msg)?;
        if let Some(d) = deltas.iter().find(|d| !(0.0..=1.0).contains(*d)) {
            bail!("threshold {d} must lie in [0, 1]");
        }
        let baselines: Vec<Strategy> = resolve_all(&args.estimators, None)?
            .into_iter()
            .filter(|s| !matches!(s, Strategy::Erse(_)))
            .collect();
        let erse: Vec<Strategy> = deltas
            .iter()
            .map(|&d| Strategy::Erse(ersecov_core::ErseConfig::with_delta(d)))
            .collect();
        let mut strategies = baselines.clone();
        strategies.extend(erse.iter().cloned());
        let cfg = BacktestConfig {
            window: args.window,
            strategies,
            start_index: None,
            rng_seed: args.common.seed,
        };
        let res = rolling_backtest(&panel, &cfg)?;
        for (k, &d) in deltas.iter().enumerate() {
            let label = erse[k].label();
            let mut sub = res.clone();
            sub.columns.retain(|c| c.label == label || baselines.iter().any(|b| b.label() == c.label));
            rows.extend(sweep_rows("delta", d, &sub, |l| if l == label { "ERSE".into() } else { l.into() }));
        }
        manifest.note("delta_grid", &deltas)?;
        manifest.note("delta_sweep_window", args.window)?;
    }

    if let Some(spec) = &args.windows {
        let grid = parse_grid(spec).map_err(anyhow::Error::msg)?;
        let mut windows = Vec::with_capacity(grid.len());
        for w in grid {
            if w.fract() != 0.0 || w < 2.0 {
                bail!("window {w} must be an integer of at least 2");
            }
            windows.push(w as usize);
        }
        let strategies = resolve_all(&args.estimators, args.delta)?;
        let start = args.start.unwrap_or(windows.iter().max().copied().unwrap_or(0) + 1);
        let cfg = BacktestConfig {
            window: windows[0],
            strategies,
            start_index: Some(start),
            rng_seed: args.common.seed,
        };
        for (w, res) in window_sweep(&panel, &windows, &cfg)? {
            rows.extend(sweep_rows("window", w as f64, &res, |l| l.to_string()));
        }
        manifest.note("common_start_index", start)?;
        manifest.note("common_start_date", panel.dates().get(start - 1))?;
    }

    let mut out = OutputDir::create(&args.common.out)?;
    out.write_rows("sweep.csv", &rows)?;
    out.finish(manifest)?;
    Ok(true)
}

#[derive(Serialize)]
struct DrawRow {
    draw: usize,
    strategy: String,
    oos_variance: String,
    assets: String,
}

#[derive(Serialize)]
struct SubsampleRow {
    strategy: String,
    mean: String,
    std: String,
    max: String,
    min: String,
    win_rate: String,
    mean_difference: String,
    p_value: String,
    stars: String,
}

pub fn subsample(args: &SubsampleArgs) -> Result<bool> {
    let (panel, digests) = load_panel(&args.common)?;
    let strategies = resolve_all(&args.estimators, args.delta)?;
    let reference = reference_label(&args.reference, args.delta, &strategies)?;
    let cfg = BacktestConfig {
        window: args.window,
        strategies,
        start_index: args.start,
        rng_seed: args.common.seed,
    };
    let rep = random_subsample_experiment(&panel, args.draws, args.subset, &cfg, &reference)?;
    let mut out = OutputDir::create(&args.common.out)?;
    let mut draws = Vec::new();
    for (k, d) in rep.draws.iter().enumerate() {
        let names: Vec<&str> = d.assets.iter().map(|&i| panel.assets()[i].as_str()).collect();
        for (label, v) in &d.variances {
            draws.push(DrawRow {
                draw: k + 1,
                strategy: label.clone(),
                oos_variance: fmt_opt(*v),
                assets: names.join(";"),
            });
        }
    }
    out.write_rows("draws.csv", &draws)?;
    let summary: Vec<SubsampleRow> = rep
        .summary
        .iter()
        .map(|s| SubsampleRow {
            strategy: s.label.clone(),
            mean: fmt_opt(s.mean),
            std: fmt_opt(s.std),
            max: fmt_opt(s.max),
            min: fmt_opt(s.min),
            win_rate: fmt_opt(s.win_rate),
            mean_difference: fmt_opt(s.mean_difference),
            p_value: fmt_opt(s.md_p_value),
            stars: s.md_p_value.map_or("", stars).to_string(),
        })
        .collect();
    out.write_rows("summary.csv", &summary)?;
    let mut manifest = Manifest::new("subsample", args.common.seed, args, digests)?;
    manifest.note("reference", &reference)?;
    manifest.note("reference_win_rate", rep.reference_win_rate)?;
    manifest.note("start_index", cfg.start())?;
    out.finish(manifest)?;
    Ok(true)
}
