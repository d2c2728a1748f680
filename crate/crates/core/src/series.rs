//! Return series and per-segment risk-adjusted metrics.
//!
//! Segment statistics come from a [`PrefixTable`] of cumulative sums so any
//! contiguous segment's mean and sample standard deviation are available in
//! constant time. The MRP search evaluates a very large number of segments,
//! so this is the hot path of the whole crate.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SeriesError {
    #[error("series is empty")]
    EmptySeries,
    #[error("{dates} dates but {returns} returns")]
    LengthMismatch { dates: usize, returns: usize },
    #[error("dates not strictly increasing at observation {index}")]
    DatesNotIncreasing { index: usize },
    #[error("non-finite return at observation {index}")]
    NonFiniteReturn { index: usize },
    #[error("periods per year must be positive")]
    InvalidFrequency,
    #[error("segment [{start}, {end}) has zero dispersion")]
    ZeroVariance { start: usize, end: usize },
    #[error("segment of length {len} is shorter than the required {min}")]
    SegmentTooShort { len: usize, min: usize },
    #[error("segment [{start}, {end}) is out of range for a series of length {len}")]
    InvalidRange {
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("return at observation {index} is at or below -100%, wealth is no longer positive")]
    WealthNonPositive { index: usize },
    #[error("series of length {len} is too short, at least {needed} observations required")]
    SeriesTooShort { len: usize, needed: usize },
    #[error("window must be at least 2 periods, got {0}")]
    InvalidWindow(usize),
}

/// Sampling frequency of a return series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    Daily,
    Monthly,
}

impl Frequency {
    pub const fn periods_per_year(self) -> usize {
        match self {
            Frequency::Daily => 252,
            Frequency::Monthly => 12,
        }
    }

    /// Default rolling-Sharpe window: one year of daily data, three years of monthly.
    pub const fn default_rolling_window(self) -> usize {
        match self {
            Frequency::Daily => 252,
            Frequency::Monthly => 36,
        }
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Frequency::Daily => f.write_str("daily"),
            Frequency::Monthly => f.write_str("monthly"),
        }
    }
}

impl FromStr for Frequency {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "daily" | "d" => Ok(Frequency::Daily),
            "monthly" | "m" => Ok(Frequency::Monthly),
            other => Err(format!(
                "unknown frequency '{other}' (expected daily or monthly)"
            )),
        }
    }
}

/// Dated periodic returns of one strategy.
///
/// Returns are decimal fractions per period (0.01 = 1%) and are taken to be
/// excess returns already; no risk-free rate is subtracted anywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    label: String,
    frequency: Frequency,
    dates: Vec<NaiveDate>,
    returns: Vec<f64>,
}

impl ReturnSeries {
    pub fn new(
        label: impl Into<String>,
        frequency: Frequency,
        dates: Vec<NaiveDate>,
        returns: Vec<f64>,
    ) -> Result<Self, SeriesError> {
        if dates.len() != returns.len() {
            return Err(SeriesError::LengthMismatch {
                dates: dates.len(),
                returns: returns.len(),
            });
        }
        if let Some(index) = dates.windows(2).position(|w| w[1] <= w[0]) {
            return Err(SeriesError::DatesNotIncreasing { index: index + 1 });
        }
        if let Some(index) = returns.iter().position(|r| !r.is_finite()) {
            return Err(SeriesError::NonFiniteReturn { index });
        }
        Ok(Self {
            label: label.into(),
            frequency,
            dates,
            returns,
        })
    }

    /// Series with consecutive placeholder dates, for callers that only care
    /// about the returns (simulation, tests).
    pub fn from_returns(
        label: impl Into<String>,
        frequency: Frequency,
        returns: Vec<f64>,
    ) -> Result<Self, SeriesError> {
        let origin = NaiveDate::from_ymd_opt(1980, 1, 1).expect("valid date");
        let dates = origin.iter_days().take(returns.len()).collect();
        Self::new(label, frequency, dates, returns)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn frequency(&self) -> Frequency {
        self.frequency
    }

    pub fn periods_per_year(&self) -> usize {
        self.frequency.periods_per_year()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn returns(&self) -> &[f64] {
        &self.returns
    }

    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    /// The trailing `periods` observations (the whole series if shorter).
    pub fn tail(&self, periods: usize) -> ReturnSeries {
        let start = self.len().saturating_sub(periods);
        ReturnSeries {
            label: self.label.clone(),
            frequency: self.frequency,
            dates: self.dates[start..].to_vec(),
            returns: self.returns[start..].to_vec(),
        }
    }

    /// Same dates, returns replaced. Used for scaling and reversal checks.
    pub fn with_returns(&self, returns: Vec<f64>) -> Result<ReturnSeries, SeriesError> {
        Self::new(
            self.label.clone(),
            self.frequency,
            self.dates.clone(),
            returns,
        )
    }

    /// Returns in reverse time order, keeping the original date axis.
    pub fn reversed(&self) -> ReturnSeries {
        let mut returns = self.returns.clone();
        returns.reverse();
        ReturnSeries {
            returns,
            ..self.clone()
        }
    }

    pub fn scaled(&self, factor: f64) -> ReturnSeries {
        ReturnSeries {
            returns: self.returns.iter().map(|r| r * factor).collect(),
            ..self.clone()
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

/// Strategy minus benchmark, date by date. The information ratio is the
/// Sharpe ratio of this series.
pub fn active_returns(
    strategy: &ReturnSeries,
    benchmark: &ReturnSeries,
) -> Result<ReturnSeries, SeriesError> {
    if strategy.dates() != benchmark.dates() {
        return Err(SeriesError::LengthMismatch {
            dates: strategy.len(),
            returns: benchmark.len(),
        });
    }
    let active = strategy
        .returns()
        .iter()
        .zip(benchmark.returns())
        .map(|(s, b)| s - b)
        .collect();
    strategy.with_returns(active)
}

/// Which risk-adjusted measure to evaluate on each segment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MetricKind {
    #[default]
    Sharpe,
    /// Excess over `mar` divided by downside deviation below `mar`.
    Sortino { mar: f64 },
    /// Sharpe ratio of an already-differenced active return series
    /// (see [`active_returns`]).
    InformationRatio,
}

impl MetricKind {
    /// Shortest segment the metric is defined on.
    pub fn min_segment_len(self) -> usize {
        match self {
            MetricKind::Sharpe | MetricKind::InformationRatio => 2,
            MetricKind::Sortino { .. } => 1,
        }
    }
}

impl FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sharpe" => Ok(MetricKind::Sharpe),
            "sortino" => Ok(MetricKind::Sortino { mar: 0.0 }),
            "ir" | "information_ratio" | "information-ratio" => Ok(MetricKind::InformationRatio),
            other => Err(format!(
                "unknown metric '{other}' (expected sharpe, sortino or information_ratio)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentStats {
    pub start: usize,
    pub end_exclusive: usize,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; `None` for a single observation.
    pub stdev: Option<f64>,
    /// `None` when the standard deviation is undefined or zero.
    pub sharpe_annualized: Option<f64>,
}

#[derive(Debug, Clone)]
struct DownsideSums {
    mar: f64,
    squares: Vec<f64>,
}

/// Cumulative sums of returns and squared returns.
///
/// Sums are taken over returns centred on the full-series mean, which keeps
/// the `sum_sq - sum^2 / n` variance formula well conditioned. Constant
/// segments are detected exactly through a running count of value changes,
/// so a flat stretch always reports zero dispersion rather than rounding noise.
#[derive(Debug, Clone)]
pub struct PrefixTable {
    returns: Vec<f64>,
    periods_per_year: usize,
    center: f64,
    sums: Vec<f64>,
    squares: Vec<f64>,
    /// `changes[i]` = number of `p` in `1..i` with `x[p] != x[p - 1]`.
    changes: Vec<u32>,
    downside: Option<DownsideSums>,
}

// Relative size of the cancellation error at which the constant-time variance
// is replaced by a direct pass over the segment.
const CANCELLATION_GUARD: f64 = 1.0e-12;

impl PrefixTable {
    pub fn new(series: &ReturnSeries) -> Result<Self, SeriesError> {
        Self::from_slice(series.returns(), series.periods_per_year())
    }

    /// Table that additionally serves Sortino ratios at the given MAR in
    /// constant time.
    pub fn with_mar(series: &ReturnSeries, mar: f64) -> Result<Self, SeriesError> {
        let mut table = Self::new(series)?;
        let mut squares = Vec::with_capacity(table.returns.len() + 1);
        let mut acc = 0.0;
        squares.push(acc);
        for &r in &table.returns {
            let shortfall = (r - mar).min(0.0);
            acc += shortfall * shortfall;
            squares.push(acc);
        }
        table.downside = Some(DownsideSums { mar, squares });
        Ok(table)
    }

    /// Table suited to evaluating `kind` repeatedly.
    pub fn for_metric(series: &ReturnSeries, kind: MetricKind) -> Result<Self, SeriesError> {
        match kind {
            MetricKind::Sortino { mar } => Self::with_mar(series, mar),
            _ => Self::new(series),
        }
    }

    pub fn from_slice(returns: &[f64], periods_per_year: usize) -> Result<Self, SeriesError> {
        if returns.is_empty() {
            return Err(SeriesError::EmptySeries);
        }
        if periods_per_year == 0 {
            return Err(SeriesError::InvalidFrequency);
        }
        let center = returns.iter().sum::<f64>() / returns.len() as f64;
        let mut sums = Vec::with_capacity(returns.len() + 1);
        let mut squares = Vec::with_capacity(returns.len() + 1);
        let mut changes = Vec::with_capacity(returns.len() + 1);
        let (mut s1, mut s2, mut c) = (0.0, 0.0, 0u32);
        sums.push(s1);
        squares.push(s2);
        changes.push(c);
        for (i, &r) in returns.iter().enumerate() {
            let centred = r - center;
            s1 += centred;
            s2 += centred * centred;
            if i > 0 && r != returns[i - 1] {
                c += 1;
            }
            sums.push(s1);
            squares.push(s2);
            changes.push(c);
        }
        Ok(Self {
            returns: returns.to_vec(),
            periods_per_year,
            center,
            sums,
            squares,
            changes,
            downside: None,
        })
    }

    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    pub fn returns(&self) -> &[f64] {
        &self.returns
    }

    pub fn periods_per_year(&self) -> usize {
        self.periods_per_year
    }

    /// Cumulative sum of returns over `[0, i)`.
    pub fn cumulative_sum(&self, i: usize) -> f64 {
        self.sums[i] + self.center * i as f64
    }

    /// Cumulative sum of squared returns over `[0, i)`.
    pub fn cumulative_sum_sq(&self, i: usize) -> f64 {
        // sum (y + c)^2 = sum y^2 + 2c sum y + n c^2
        let c = self.center;
        self.squares[i] + 2.0 * c * self.sums[i] + i as f64 * c * c
    }

    /// True when every return in `[start, end)` is identical.
    pub fn is_constant(&self, start: usize, end: usize) -> bool {
        end <= start + 1 || self.changes[end] == self.changes[start + 1]
    }

    fn check_range(&self, start: usize, end: usize) -> Result<(), SeriesError> {
        if start >= end || end > self.len() {
            return Err(SeriesError::InvalidRange {
                start,
                end,
                len: self.len(),
            });
        }
        Ok(())
    }

    /// Mean and sum of squared deviations of `[start, end)`.
    fn moments(&self, start: usize, end: usize) -> (f64, f64) {
        let n = (end - start) as f64;
        let s1 = self.sums[end] - self.sums[start];
        let mean = self.center + s1 / n;
        if self.is_constant(start, end) {
            return (self.returns[start], 0.0);
        }
        let s2 = self.squares[end] - self.squares[start];
        let ss = s2 - s1 * s1 / n;
        let rounding = 8.0 * f64::EPSILON * (self.squares[end] + self.squares[start]);
        if ss * CANCELLATION_GUARD > rounding {
            return (mean, ss);
        }
        // Short or nearly flat segment deep inside a long series: recompute.
        let seg = &self.returns[start..end];
        let mean = seg.iter().sum::<f64>() / n;
        let ss = seg.iter().map(|r| (r - mean) * (r - mean)).sum();
        (mean, ss)
    }

    pub fn segment_stats(&self, start: usize, end: usize) -> Result<SegmentStats, SeriesError> {
        self.check_range(start, end)?;
        let n = end - start;
        let (mean, ss) = self.moments(start, end);
        let stdev = (n > 1).then(|| (ss / (n - 1) as f64).max(0.0).sqrt());
        let sharpe_annualized = stdev
            .filter(|&sd| sd > 0.0)
            .map(|sd| mean / sd * (self.periods_per_year as f64).sqrt());
        Ok(SegmentStats {
            start,
            end_exclusive: end,
            n,
            mean,
            stdev,
            sharpe_annualized,
        })
    }

    /// Annualized metric of `[start, end)`.
    pub fn segment_metric(
        &self,
        start: usize,
        end: usize,
        kind: MetricKind,
    ) -> Result<f64, SeriesError> {
        self.check_range(start, end)?;
        let n = end - start;
        let min = kind.min_segment_len();
        if n < min {
            return Err(SeriesError::SegmentTooShort { len: n, min });
        }
        let annualizer = (self.periods_per_year as f64).sqrt();
        match kind {
            MetricKind::Sharpe | MetricKind::InformationRatio => {
                let (mean, ss) = self.moments(start, end);
                if ss <= 0.0 {
                    return Err(SeriesError::ZeroVariance { start, end });
                }
                let sd = (ss / (n - 1) as f64).sqrt();
                Ok(mean / sd * annualizer)
            }
            MetricKind::Sortino { mar } => {
                let mean = self.center + (self.sums[end] - self.sums[start]) / n as f64;
                let direct = || -> f64 {
                    self.returns[start..end]
                        .iter()
                        .map(|r| (r - mar).min(0.0).powi(2))
                        .sum()
                };
                let downside_sq = match &self.downside {
                    Some(d) if d.mar == mar => {
                        let diff = d.squares[end] - d.squares[start];
                        let rounding = 8.0 * f64::EPSILON * d.squares[end];
                        if diff * CANCELLATION_GUARD > rounding {
                            diff
                        } else {
                            direct()
                        }
                    }
                    _ => direct(),
                };
                if downside_sq <= 0.0 {
                    return Err(SeriesError::ZeroVariance { start, end });
                }
                let dd = (downside_sq / n as f64).sqrt();
                Ok((mean - mar) / dd * annualizer)
            }
        }
    }

    /// Metric of the whole series.
    pub fn full_metric(&self, kind: MetricKind) -> Result<f64, SeriesError> {
        self.segment_metric(0, self.len(), kind)
    }
}

/// Annualized metric of a whole series.
pub fn series_metric(series: &ReturnSeries, kind: MetricKind) -> Result<f64, SeriesError> {
    PrefixTable::new(series)?.full_metric(kind)
}

/// Largest peak-to-trough loss of the compounded wealth path, as a fraction.
pub fn max_drawdown(series: &ReturnSeries) -> Result<f64, SeriesError> {
    if series.is_empty() {
        return Err(SeriesError::EmptySeries);
    }
    let mut wealth = 1.0_f64;
    let mut peak = 1.0_f64;
    let mut worst = 0.0_f64;
    for (index, &r) in series.returns().iter().enumerate() {
        if r <= -1.0 {
            return Err(SeriesError::WealthNonPositive { index });
        }
        wealth *= 1.0 + r;
        peak = peak.max(wealth);
        worst = worst.max(1.0 - wealth / peak);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RollingSharpeVolatility {
    pub value: f64,
    pub windows: usize,
    /// Windows dropped because their returns had zero dispersion.
    pub skipped: usize,
}

/// Standard deviation of annualized Sharpe ratios over every contiguous
/// window of `window` periods.
pub fn rolling_sharpe_volatility(
    series: &ReturnSeries,
    window: usize,
) -> Result<RollingSharpeVolatility, SeriesError> {
    if window < 2 {
        return Err(SeriesError::InvalidWindow(window));
    }
    if series.len() < window + 1 {
        return Err(SeriesError::SeriesTooShort {
            len: series.len(),
            needed: window + 1,
        });
    }
    let table = PrefixTable::new(series)?;
    let mut sharpes = Vec::with_capacity(series.len() - window + 1);
    let mut skipped = 0;
    for start in 0..=series.len() - window {
        match table.segment_metric(start, start + window, MetricKind::Sharpe) {
            Ok(v) => sharpes.push(v),
            Err(SeriesError::ZeroVariance { .. }) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if skipped > 0 {
        log_skipped(series.label(), skipped);
    }
    if sharpes.len() < 2 {
        return Err(SeriesError::SeriesTooShort {
            len: sharpes.len(),
            needed: 2,
        });
    }
    let n = sharpes.len() as f64;
    let mean = sharpes.iter().sum::<f64>() / n;
    let var = sharpes.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
    Ok(RollingSharpeVolatility {
        value: var.sqrt(),
        windows: sharpes.len(),
        skipped,
    })
}

fn log_skipped(label: &str, skipped: usize) {
    eprintln!("warning: {label}: skipped {skipped} rolling window(s) with zero dispersion");
}
