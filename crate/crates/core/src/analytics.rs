//! Cross-strategy products built on the MRP engine: per-factor reports,
//! the Sharpe/MRP frontier, lookback x minimum-length sensitivity grids,
//! correlations against other robustness measures, portfolio MRP and a
//! circular block bootstrap.
//!
//! Everything that fans out over cells or replicates runs on the current
//! rayon pool and gathers results in input order, so output does not depend
//! on the worker count.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::mrp::{left_right_report, mrp_fast, MrpError, MrpResult};
use crate::series::{
    max_drawdown, rolling_sharpe_volatility, Frequency, MetricKind, PrefixTable, ReturnSeries,
    SeriesError,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("{0}")]
    Infeasible(String),
    #[error("{0} has zero variance across strategies")]
    DegenerateVector(String),
    #[error("strategies share no common dates")]
    DateMismatch,
    #[error("block length {block_len} is invalid for a series of length {n}")]
    InvalidBlock { block_len: usize, n: usize },
    #[error("{0}")]
    InvalidInput(String),
    #[error(transparent)]
    Mrp(#[from] MrpError),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// A length given in years or in periods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Span {
    Years(f64),
    Periods(usize),
}

impl Span {
    pub fn periods(self, frequency: Frequency) -> usize {
        match self {
            Span::Years(y) => (y * frequency.periods_per_year() as f64).round() as usize,
            Span::Periods(p) => p,
        }
    }

    pub fn years(self, frequency: Frequency) -> f64 {
        match self {
            Span::Years(y) => y,
            Span::Periods(p) => p as f64 / frequency.periods_per_year() as f64,
        }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Span::Years(y) => write!(f, "{y}y"),
            Span::Periods(p) => write!(f, "{p}p"),
        }
    }
}

impl FromStr for Span {
    type Err = String;

    /// `"2y"`, `"1.5y"` or `"504p"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || format!("'{s}' is not a span (expected e.g. 2y or 504p)");
        if let Some(years) = s.strip_suffix('y') {
            let y: f64 = years.parse().map_err(|_| bad())?;
            if !(y > 0.0 && y.is_finite()) {
                return Err(bad());
            }
            Ok(Span::Years(y))
        } else if let Some(periods) = s.strip_suffix('p') {
            let p: usize = periods.parse().map_err(|_| bad())?;
            if p == 0 {
                return Err(bad());
            }
            Ok(Span::Periods(p))
        } else {
            Err(bad())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorReport {
    pub label: String,
    pub full_sharpe: f64,
    pub mrp1: f64,
    pub left_sr: f64,
    pub right_sr: f64,
    pub split_date: NaiveDate,
    pub window_start: NaiveDate,
    pub window_end: NaiveDate,
}

fn trailing_window(series: &ReturnSeries, lookback: usize) -> Result<ReturnSeries, AnalyticsError> {
    if lookback > series.len() {
        return Err(AnalyticsError::Infeasible(format!(
            "{}: lookback of {lookback} periods exceeds the {} available",
            series.label(),
            series.len()
        )));
    }
    Ok(series.tail(lookback))
}

/// Full-window metric and single-split MRP over the trailing lookback.
pub fn factor_report(
    series: &ReturnSeries,
    lookback: Span,
    d: Span,
    kind: MetricKind,
) -> Result<FactorReport, AnalyticsError> {
    let freq = series.frequency();
    let (lookback, d) = (lookback.periods(freq), d.periods(freq));
    let window = trailing_window(series, lookback)?;
    if lookback < 2 * d {
        return Err(AnalyticsError::Infeasible(format!(
            "{}: lookback of {lookback} periods cannot hold two segments of {d}",
            series.label()
        )));
    }
    let full_sharpe = PrefixTable::for_metric(&window, kind)?.full_metric(kind)?;
    let lr = left_right_report(&window, d, kind)?;
    Ok(FactorReport {
        label: series.label().to_string(),
        full_sharpe,
        mrp1: lr.mrp,
        left_sr: lr.left_sr,
        right_sr: lr.right_sr,
        split_date: lr.split_date,
        window_start: window.dates()[0],
        window_end: *window.dates().last().expect("non-empty window"),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrontierPoint {
    pub label: String,
    /// Full-sample Sharpe ratio.
    pub x: f64,
    /// MRP.
    pub y: f64,
    pub dominated: bool,
    /// Labels of the points with strictly higher Sharpe and strictly higher MRP.
    pub dominated_by: Vec<String>,
}

pub fn frontier(reports: &[FactorReport]) -> Vec<FrontierPoint> {
    let points: Vec<(String, f64, f64)> = reports
        .iter()
        .map(|r| (r.label.clone(), r.full_sharpe, r.mrp1))
        .collect();
    frontier_points(&points)
}

/// Dominance over raw `(label, sharpe, mrp)` triples.
pub fn frontier_points(points: &[(String, f64, f64)]) -> Vec<FrontierPoint> {
    points
        .iter()
        .map(|(label, x, y)| {
            let dominated_by: Vec<String> = points
                .iter()
                .filter(|(_, ox, oy)| ox > x && oy > y)
                .map(|(l, _, _)| l.clone())
                .collect();
            FrontierPoint {
                label: label.clone(),
                x: *x,
                y: *y,
                dominated: !dominated_by.is_empty(),
                dominated_by,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", content = "value", rename_all = "lowercase")]
pub enum GridCell {
    /// MRP minus full-window metric.
    Value(f64),
    /// Lookback longer than the history, too short for `s + 1` segments,
    /// or no partition with a defined metric.
    Infeasible,
}

impl GridCell {
    pub fn value(self) -> Option<f64> {
        match self {
            GridCell::Value(v) => Some(v),
            GridCell::Infeasible => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityGrid {
    pub label: String,
    pub splits: usize,
    pub lookbacks: Vec<Span>,
    pub ds: Vec<Span>,
    /// `cells[lookback][d]`.
    pub cells: Vec<Vec<GridCell>>,
}

impl SensitivityGrid {
    fn axis_mean(values: impl Iterator<Item = GridCell>) -> Option<f64> {
        let (sum, count) = values
            .filter_map(GridCell::value)
            .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
        (count > 0).then(|| sum / count as f64)
    }

    /// Mean over the `d` axis for each lookback (feasible cells only).
    pub fn mean_by_lookback(&self) -> Vec<Option<f64>> {
        self.cells
            .iter()
            .map(|row| Self::axis_mean(row.iter().copied()))
            .collect()
    }

    /// Mean over the lookback axis for each `d` (feasible cells only).
    pub fn mean_by_d(&self) -> Vec<Option<f64>> {
        (0..self.ds.len())
            .map(|k| Self::axis_mean(self.cells.iter().map(|row| row[k])))
            .collect()
    }
}

fn grid_cell(
    series: &ReturnSeries,
    lookback: usize,
    d: usize,
    s: usize,
    kind: MetricKind,
) -> GridCell {
    if lookback > series.len() || lookback < (s + 1) * d {
        return GridCell::Infeasible;
    }
    let window = series.tail(lookback);
    let full = PrefixTable::for_metric(&window, kind).and_then(|t| t.full_metric(kind));
    match (mrp_fast(&window, s, d, kind), full) {
        (Ok(m), Ok(f)) => GridCell::Value(m.value - f),
        _ => GridCell::Infeasible,
    }
}

/// `MRP - metric` on the trailing window for every (lookback, d) pair.
pub fn sensitivity_grid(
    series: &ReturnSeries,
    lookbacks: &[Span],
    ds: &[Span],
    s: usize,
    kind: MetricKind,
) -> Result<SensitivityGrid, AnalyticsError> {
    if lookbacks.is_empty() || ds.is_empty() {
        return Err(AnalyticsError::InvalidInput(
            "sensitivity axes must be non-empty".into(),
        ));
    }
    if s == 0 {
        return Err(AnalyticsError::InvalidInput(
            "split count must be at least 1".into(),
        ));
    }
    let freq = series.frequency();
    let pairs: Vec<(usize, usize)> = lookbacks
        .iter()
        .flat_map(|l| ds.iter().map(move |d| (l.periods(freq), d.periods(freq))))
        .collect();
    let flat: Vec<GridCell> = pairs
        .par_iter()
        .map(|&(l, d)| grid_cell(series, l, d, s, kind))
        .collect();
    let cells = flat.chunks(ds.len()).map(<[GridCell]>::to_vec).collect();
    Ok(SensitivityGrid {
        label: series.label().to_string(),
        splits: s,
        lookbacks: lookbacks.to_vec(),
        ds: ds.to_vec(),
        cells,
    })
}

/// Cell-wise mean across factors, the aggregate behind the summary heatmaps.
pub fn average_grids(grids: &[SensitivityGrid]) -> Result<SensitivityGrid, AnalyticsError> {
    let first = grids
        .first()
        .ok_or_else(|| AnalyticsError::InvalidInput("no grids to average".into()))?;
    if grids
        .iter()
        .any(|g| g.lookbacks != first.lookbacks || g.ds != first.ds)
    {
        return Err(AnalyticsError::InvalidInput(
            "grids have different axes".into(),
        ));
    }
    let cells = (0..first.lookbacks.len())
        .map(|i| {
            (0..first.ds.len())
                .map(|k| {
                    SensitivityGrid::axis_mean(grids.iter().map(|g| g.cells[i][k]))
                        .map_or(GridCell::Infeasible, GridCell::Value)
                })
                .collect()
        })
        .collect();
    Ok(SensitivityGrid {
        label: "average".into(),
        splits: first.splits,
        lookbacks: first.lookbacks.clone(),
        ds: first.ds.clone(),
        cells,
    })
}

/// Per-factor inputs to [`robustness_correlations`], aligned by index.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RobustnessVectors {
    pub labels: Vec<String>,
    pub mrp: Vec<f64>,
    pub sharpe: Vec<f64>,
    pub rolling_sharpe_vol: Vec<f64>,
    pub max_drawdown: Vec<f64>,
}

impl RobustnessVectors {
    pub const NAMES: [&'static str; 4] = ["mrp", "sharpe", "rolling_sharpe_vol", "max_drawdown"];

    fn columns(&self) -> [&[f64]; 4] {
        [
            &self.mrp,
            &self.sharpe,
            &self.rolling_sharpe_vol,
            &self.max_drawdown,
        ]
    }
}

/// Computes the four robustness measures for each factor over its trailing
/// lookback window.
pub fn robustness_vectors(
    series: &[ReturnSeries],
    lookback: Span,
    d: Span,
    s: usize,
    window: Option<usize>,
    kind: MetricKind,
) -> Result<RobustnessVectors, AnalyticsError> {
    let rows = series
        .par_iter()
        .map(|x| -> Result<_, AnalyticsError> {
            let freq = x.frequency();
            let w = trailing_window(x, lookback.periods(freq))?;
            let mrp = mrp_fast(&w, s, d.periods(freq), kind)?.value;
            let sharpe = PrefixTable::for_metric(&w, kind)?.full_metric(kind)?;
            let roll =
                rolling_sharpe_volatility(&w, window.unwrap_or(freq.default_rolling_window()))?;
            let dd = max_drawdown(&w)?;
            Ok((x.label().to_string(), mrp, sharpe, roll.value, dd))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = RobustnessVectors::default();
    for (label, mrp, sharpe, roll, dd) in rows {
        out.labels.push(label);
        out.mrp.push(mrp);
        out.sharpe.push(sharpe);
        out.rolling_sharpe_vol.push(roll);
        out.max_drawdown.push(dd);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    (saa > 0.0 && sbb > 0.0).then(|| (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson correlation matrix across factors of MRP, full Sharpe, rolling
/// Sharpe volatility and maximum drawdown.
pub fn robustness_correlations(v: &RobustnessVectors) -> Result<CorrelationMatrix, AnalyticsError> {
    let cols = v.columns();
    let n = v.labels.len();
    if n < 3 {
        return Err(AnalyticsError::InvalidInput(format!(
            "correlations need at least 3 factors, got {n}"
        )));
    }
    if cols.iter().any(|c| c.len() != n) {
        return Err(AnalyticsError::InvalidInput(
            "metric vectors differ in length".into(),
        ));
    }
    for (name, col) in RobustnessVectors::NAMES.iter().zip(cols) {
        if pearson(col, col).is_none() {
            return Err(AnalyticsError::DegenerateVector(name.to_string()));
        }
    }
    let values = (0..4)
        .map(|i| {
            (0..4)
                .map(|j| {
                    if i == j {
                        1.0
                    } else {
                        pearson(cols[i], cols[j]).expect("checked non-degenerate")
                    }
                })
                .collect()
        })
        .collect();
    Ok(CorrelationMatrix {
        names: RobustnessVectors::NAMES
            .iter()
            .map(|s| s.to_string())
            .collect(),
        values,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioSpec {
    pub weights: Vec<f64>,
    pub strategies: Vec<ReturnSeries>,
}

impl PortfolioSpec {
    /// Weighted sum of strategy returns on the dates every strategy has.
    pub fn aggregate(&self) -> Result<ReturnSeries, AnalyticsError> {
        if self.weights.len() != self.strategies.len() || self.strategies.is_empty() {
            return Err(AnalyticsError::InvalidInput(format!(
                "{} weights for {} strategies",
                self.weights.len(),
                self.strategies.len()
            )));
        }
        if self.weights.iter().any(|w| !w.is_finite()) || self.weights.iter().all(|&w| w == 0.0) {
            return Err(AnalyticsError::InvalidInput(
                "weights must be finite with at least one non-zero".into(),
            ));
        }
        let frequency = self.strategies[0].frequency();
        if self.strategies.iter().any(|s| s.frequency() != frequency) {
            return Err(AnalyticsError::InvalidInput(
                "strategies mix frequencies".into(),
            ));
        }
        let mut common: BTreeSet<NaiveDate> = self.strategies[0].dates().iter().copied().collect();
        for s in &self.strategies[1..] {
            let dates: BTreeSet<NaiveDate> = s.dates().iter().copied().collect();
            common = common.intersection(&dates).copied().collect();
        }
        if common.is_empty() {
            return Err(AnalyticsError::DateMismatch);
        }
        let dates: Vec<NaiveDate> = common.into_iter().collect();
        let mut total = vec![0.0; dates.len()];
        for (w, s) in self.weights.iter().zip(&self.strategies) {
            // both date lists are sorted; walk them together
            let mut k = 0;
            for (date, r) in s.dates().iter().zip(s.returns()) {
                if k < dates.len() && *date == dates[k] {
                    total[k] += w * r;
                    k += 1;
                }
            }
        }
        let label = self
            .strategies
            .iter()
            .map(ReturnSeries::label)
            .collect::<Vec<_>>()
            .join("+");
        Ok(ReturnSeries::new(label, frequency, dates, total)?)
    }
}

/// MRP of the weighted aggregate return.
pub fn portfolio_mrp(
    spec: &PortfolioSpec,
    s: usize,
    d: usize,
    kind: MetricKind,
) -> Result<MrpResult, AnalyticsError> {
    Ok(mrp_fast(&spec.aggregate()?, s, d, kind)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapSummary {
    pub replicates: usize,
    /// Replicates with no partition on which the metric is defined.
    pub failed: usize,
    pub original: f64,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    /// `(probability, value)` pairs.
    pub quantiles: Vec<(f64, f64)>,
    pub values: Vec<f64>,
}

pub const BOOTSTRAP_QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Circular block resample: blocks of `block_len` consecutive returns with
/// uniform random starts, wrapping at the end, truncated to the original length.
pub fn circular_block_resample(returns: &[f64], block_len: usize, rng: &mut impl Rng) -> Vec<f64> {
    let n = returns.len();
    let mut out = Vec::with_capacity(n + block_len);
    while out.len() < n {
        let start = rng.random_range(0..n);
        out.extend((0..block_len).map(|k| returns[(start + k) % n]));
    }
    out.truncate(n);
    out
}

/// Distribution of MRP over circular block bootstrap replicates. Replicate
/// `r` draws from ChaCha stream `r` of `seed`.
pub fn block_bootstrap_mrp(
    series: &ReturnSeries,
    block_len: usize,
    replicates: usize,
    s: usize,
    d: usize,
    kind: MetricKind,
    seed: u64,
) -> Result<BootstrapSummary, AnalyticsError> {
    let n = series.len();
    if block_len == 0 || block_len > n {
        return Err(AnalyticsError::InvalidBlock { block_len, n });
    }
    if replicates == 0 {
        return Err(AnalyticsError::InvalidInput(
            "need at least one replicate".into(),
        ));
    }
    let original = mrp_fast(series, s, d, kind)?.value;
    let outcomes: Vec<Result<Option<f64>, AnalyticsError>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let resampled = circular_block_resample(series.returns(), block_len, &mut rng);
            match mrp_fast(&series.with_returns(resampled)?, s, d, kind) {
                Ok(m) => Ok(Some(m.value)),
                Err(MrpError::NoValidPartition) => Ok(None),
                Err(e) => Err(e.into()),
            }
        })
        .collect();
    let mut values = Vec::with_capacity(replicates);
    let mut failed = 0;
    for outcome in outcomes {
        match outcome? {
            Some(v) => values.push(v),
            None => failed += 1,
        }
    }
    if values.is_empty() {
        return Err(MrpError::NoValidPartition.into());
    }
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(BootstrapSummary {
        replicates,
        failed,
        original,
        mean,
        sd,
        min: sorted[0],
        max: sorted[sorted.len() - 1],
        quantiles: BOOTSTRAP_QUANTILES
            .iter()
            .map(|&p| (p, quantile_sorted(&sorted, p)))
            .collect(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{make_fixture, FixtureSpec};

    fn report(label: &str, x: f64, y: f64) -> (String, f64, f64) {
        (label.to_string(), x, y)
    }

    #[test]
    fn span_parsing() {
        assert_eq!("2y".parse::<Span>().unwrap(), Span::Years(2.0));
        assert_eq!("504p".parse::<Span>().unwrap(), Span::Periods(504));
        assert!("2".parse::<Span>().is_err());
        assert!("0p".parse::<Span>().is_err());
        assert!("-1y".parse::<Span>().is_err());
        assert_eq!(Span::Years(2.0).periods(Frequency::Daily), 504);
        assert_eq!(Span::Years(40.0).periods(Frequency::Monthly), 480);
    }

    #[test]
    fn dominance() {
        let single = frontier_points(&[report("a", 0.5, -0.2)]);
        assert!(!single[0].dominated);
        let pair = frontier_points(&[report("a", 0.5, -0.2), report("b", 0.6, -0.1)]);
        assert!(pair[0].dominated);
        assert_eq!(pair[0].dominated_by, vec!["b".to_string()]);
        assert!(!pair[1].dominated);
        // equal on one axis is not domination
        let tie = frontier_points(&[report("a", 0.5, -0.2), report("b", 0.5, -0.1)]);
        assert!(!tie[0].dominated && !tie[1].dominated);
    }

    #[test]
    fn correlation_extremes() {
        let v = vec![0.1, -0.3, 0.7, 0.2];
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        assert!((pearson(&v, &v).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&v, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert!(pearson(&v, &[1.0; 4]).is_none());
    }

    #[test]
    fn degenerate_and_short_inputs() {
        let mut v = RobustnessVectors {
            labels: vec!["a".into(), "b".into()],
            mrp: vec![0.1, 0.2],
            sharpe: vec![0.3, 0.1],
            rolling_sharpe_vol: vec![0.5, 0.6],
            max_drawdown: vec![0.2, 0.3],
        };
        assert!(matches!(
            robustness_correlations(&v),
            Err(AnalyticsError::InvalidInput(_))
        ));
        v.labels.push("c".into());
        v.mrp.push(0.0);
        v.sharpe.push(0.4);
        v.rolling_sharpe_vol.push(0.7);
        v.max_drawdown = vec![0.3; 3];
        assert_eq!(
            robustness_correlations(&v).unwrap_err(),
            AnalyticsError::DegenerateVector("max_drawdown".into())
        );
    }

    #[test]
    fn infeasible_grid_cells() {
        let x = make_fixture(3, &FixtureSpec::strong_break(400, 200)).unwrap();
        let grid = sensitivity_grid(
            &x,
            &[Span::Periods(100), Span::Periods(500)],
            &[Span::Periods(20), Span::Periods(51)],
            1,
            MetricKind::Sharpe,
        )
        .unwrap();
        assert!(grid.cells[0][0].value().is_some());
        // d > lookback / 2
        assert_eq!(grid.cells[0][1], GridCell::Infeasible);
        // lookback longer than the data
        assert_eq!(grid.cells[1][0], GridCell::Infeasible);
        assert_eq!(grid.mean_by_lookback()[1], None);
        assert_eq!(grid.mean_by_d()[0], grid.cells[0][0].value());
    }

    #[test]
    fn report_requires_history() {
        let x = make_fixture(3, &FixtureSpec::strong_break(400, 200)).unwrap();
        assert!(matches!(
            factor_report(
                &x,
                Span::Periods(500),
                Span::Periods(10),
                MetricKind::Sharpe
            ),
            Err(AnalyticsError::Infeasible(_))
        ));
        assert!(matches!(
            factor_report(
                &x,
                Span::Periods(100),
                Span::Periods(51),
                MetricKind::Sharpe
            ),
            Err(AnalyticsError::Infeasible(_))
        ));
        let r = factor_report(
            &x,
            Span::Periods(400),
            Span::Periods(20),
            MetricKind::Sharpe,
        )
        .unwrap();
        assert_eq!(r.mrp1, r.left_sr.min(r.right_sr));
    }

    #[test]
    fn portfolio_alignment() {
        let a = make_fixture(1, &FixtureSpec::strong_break(60, 30)).unwrap();
        let b = a.tail(40).with_label("b");
        let spec = PortfolioSpec {
            weights: vec![1.0, 0.0],
            strategies: vec![a.clone(), b],
        };
        let agg = spec.aggregate().unwrap();
        assert_eq!(agg.len(), 40);
        assert_eq!(agg.returns(), a.tail(40).returns());

        let bad = PortfolioSpec {
            weights: vec![0.0],
            strategies: vec![a.clone()],
        };
        assert!(bad.aggregate().is_err());
        let disjoint = PortfolioSpec {
            weights: vec![1.0, 1.0],
            strategies: vec![
                a.tail(10),
                ReturnSeries::from_returns("z", Frequency::Daily, vec![0.01, 0.02]).unwrap(),
            ],
        };
        assert_eq!(
            disjoint.aggregate().unwrap_err(),
            AnalyticsError::DateMismatch
        );
    }

    #[test]
    fn bootstrap_argument_checks() {
        let x = make_fixture(1, &FixtureSpec::strong_break(50, 25)).unwrap();
        assert_eq!(
            block_bootstrap_mrp(&x, 51, 10, 1, 5, MetricKind::Sharpe, 1).unwrap_err(),
            AnalyticsError::InvalidBlock {
                block_len: 51,
                n: 50
            }
        );
        let one = block_bootstrap_mrp(&x, 10, 1, 1, 5, MetricKind::Sharpe, 9).unwrap();
        let again = block_bootstrap_mrp(&x, 10, 1, 1, 5, MetricKind::Sharpe, 9).unwrap();
        assert_eq!(one.values.len(), 1);
        assert_eq!(one, again);
        assert_eq!(one.sd, 0.0);
    }

    #[test]
    fn circular_resample_wraps() {
        let x: Vec<f64> = (0..7).map(f64::from).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            let r = circular_block_resample(&x, 3, &mut rng);
            assert_eq!(r.len(), 7);
            for chunk in r.chunks(3) {
                for w in chunk.windows(2) {
                    assert_eq!(w[1], (w[0] + 1.0) % 7.0);
                }
            }
        }
    }

    #[test]
    fn quantiles_interpolate() {
        let sorted = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&sorted, 0.5), 3.0);
        assert_eq!(quantile_sorted(&sorted, 0.25), 2.0);
        assert!((quantile_sorted(&sorted, 0.05) - 1.2).abs() < 1e-15);
    }
}
