//! Loading factor returns from CSV, and synthetic two-regime fixtures.
//!
//! Two layouts are read:
//!
//! * wide: one date column plus one column of returns per factor;
//! * long: one row per (factor, date, return).
//!
//! Dates are ISO-8601 (`1980-01-02`); `19800102` and `01/02/1980` are also
//! accepted. Returns are decimal fractions unless the config says percent.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::{Frequency, ReturnSeries, SeriesError};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("row {row}, column '{column}': cannot parse '{value}'")]
    ParseError {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column '{column}': missing value")]
    MissingValue { row: usize, column: String },
    #[error("series '{series}': date at row {row} is not after the previous date")]
    DateOrderError { series: String, row: usize },
    #[error("series '{series}' has no observations on or after the start date")]
    EmptySeries { series: String },
    #[error("column '{0}' not found in header")]
    MissingColumn(String),
    #[error("no value columns to load")]
    NoValueColumns,
    #[error("series dates differ; wide output needs a common date axis")]
    DateMismatch,
    #[error(transparent)]
    Series(#[from] SeriesError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingPolicy {
    /// Drop the observation from that factor only.
    #[default]
    Skip,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "layout")]
pub enum Layout {
    /// `value_columns: None` loads every non-date column.
    Wide { value_columns: Option<Vec<String>> },
    Long {
        name_column: String,
        value_column: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    pub path: PathBuf,
    pub date_column: String,
    pub layout: Layout,
    pub start_date: NaiveDate,
    pub frequency: Frequency,
    pub missing_policy: MissingPolicy,
    /// Values are percentages (1.0 = 1%).
    pub percent: bool,
    /// Values are log returns; converted with `exp(r) - 1`.
    pub log_returns: bool,
}

pub fn default_start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(1980, 1, 1).expect("valid date")
}

impl IngestConfig {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            date_column: "date".into(),
            layout: Layout::Wide {
                value_columns: None,
            },
            start_date: default_start_date(),
            frequency: Frequency::Daily,
            missing_policy: MissingPolicy::Skip,
            percent: false,
            log_returns: false,
        }
    }

    fn to_decimal(&self, value: f64) -> f64 {
        let value = if self.percent { value / 100.0 } else { value };
        if self.log_returns {
            value.exp_m1()
        } else {
            value
        }
    }
}

pub fn parse_date(text: &str) -> Option<NaiveDate> {
    let text = text.trim();
    NaiveDate::parse_from_str(text, "%Y-%m-%d")
        .or_else(|_| NaiveDate::parse_from_str(text, "%Y%m%d"))
        .or_else(|_| NaiveDate::parse_from_str(text, "%m/%d/%Y"))
        .ok()
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim(), "" | "NA" | "NaN" | "nan" | "null")
}

#[derive(Default)]
struct Builder {
    dates: Vec<NaiveDate>,
    returns: Vec<f64>,
}

impl Builder {
    fn push(
        &mut self,
        label: &str,
        row: usize,
        date: NaiveDate,
        ret: f64,
    ) -> Result<(), IngestError> {
        if self.dates.last().is_some_and(|&last| date <= last) {
            return Err(IngestError::DateOrderError {
                series: label.to_string(),
                row,
            });
        }
        self.dates.push(date);
        self.returns.push(ret);
        Ok(())
    }

    fn finish(self, label: String, frequency: Frequency) -> Result<ReturnSeries, IngestError> {
        if self.returns.is_empty() {
            return Err(IngestError::EmptySeries { series: label });
        }
        Ok(ReturnSeries::new(
            label,
            frequency,
            self.dates,
            self.returns,
        )?)
    }
}

pub fn load_csv(config: &IngestConfig) -> Result<Vec<ReturnSeries>, IngestError> {
    let file = File::open(&config.path).map_err(|source| IngestError::Io {
        path: config.path.clone(),
        source,
    })?;
    load_reader(config, file)
}

/// Same as [`load_csv`] with the data supplied by a reader; `config.path`
/// is ignored.
pub fn load_reader<R: Read>(
    config: &IngestConfig,
    reader: R,
) -> Result<Vec<ReturnSeries>, IngestError> {
    let mut csv = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = csv.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
    };
    let date_idx = column(&config.date_column)?;

    match &config.layout {
        Layout::Wide { value_columns } => {
            let names: Vec<String> = match value_columns {
                Some(cols) => cols.clone(),
                None => headers
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != date_idx)
                    .map(|(_, h)| h.to_string())
                    .collect(),
            };
            if names.is_empty() {
                return Err(IngestError::NoValueColumns);
            }
            let indices = names
                .iter()
                .map(|n| column(n))
                .collect::<Result<Vec<_>, _>>()?;
            let mut builders: Vec<Builder> = names.iter().map(|_| Builder::default()).collect();
            for (offset, record) in csv.records().enumerate() {
                let record = record?;
                let row = offset + 2;
                let date = read_date(&record, date_idx, row, &config.date_column)?;
                if date < config.start_date {
                    continue;
                }
                for ((name, &idx), builder) in names.iter().zip(&indices).zip(&mut builders) {
                    if let Some(ret) = read_value(config, &record, idx, row, name)? {
                        builder.push(name, row, date, ret)?;
                    }
                }
            }
            names
                .into_iter()
                .zip(builders)
                .map(|(name, b)| b.finish(name, config.frequency))
                .collect()
        }
        Layout::Long {
            name_column,
            value_column,
        } => {
            let name_idx = column(name_column)?;
            let value_idx = column(value_column)?;
            let mut order: Vec<String> = Vec::new();
            let mut builders: HashMap<String, Builder> = HashMap::new();
            for (offset, record) in csv.records().enumerate() {
                let record = record?;
                let row = offset + 2;
                let name = record.get(name_idx).unwrap_or("").to_string();
                if !builders.contains_key(&name) {
                    order.push(name.clone());
                    builders.insert(name.clone(), Builder::default());
                }
                let date = read_date(&record, date_idx, row, &config.date_column)?;
                if date < config.start_date {
                    continue;
                }
                if let Some(ret) = read_value(config, &record, value_idx, row, value_column)? {
                    builders
                        .get_mut(&name)
                        .expect("inserted above")
                        .push(&name, row, date, ret)?;
                }
            }
            if order.is_empty() {
                return Err(IngestError::NoValueColumns);
            }
            order
                .into_iter()
                .map(|name| {
                    let b = builders.remove(&name).expect("inserted above");
                    b.finish(name, config.frequency)
                })
                .collect()
        }
    }
}

fn read_date(
    record: &csv::StringRecord,
    idx: usize,
    row: usize,
    column: &str,
) -> Result<NaiveDate, IngestError> {
    let cell = record.get(idx).unwrap_or("");
    parse_date(cell).ok_or_else(|| IngestError::ParseError {
        row,
        column: column.to_string(),
        value: cell.to_string(),
    })
}

fn read_value(
    config: &IngestConfig,
    record: &csv::StringRecord,
    idx: usize,
    row: usize,
    column: &str,
) -> Result<Option<f64>, IngestError> {
    let cell = record.get(idx).unwrap_or("");
    if is_missing(cell) {
        return match config.missing_policy {
            MissingPolicy::Skip => Ok(None),
            MissingPolicy::Error => Err(IngestError::MissingValue {
                row,
                column: column.to_string(),
            }),
        };
    }
    let value: f64 = cell.parse().map_err(|_| IngestError::ParseError {
        row,
        column: column.to_string(),
        value: cell.to_string(),
    })?;
    if !value.is_finite() {
        return Err(IngestError::ParseError {
            row,
            column: column.to_string(),
            value: cell.to_string(),
        });
    }
    Ok(Some(config.to_decimal(value)))
}

/// Decimal returns with 12 significant digits.
pub fn format_return(value: f64) -> String {
    format!("{value:.11e}")
}

/// Writes series sharing one date axis in wide layout.
pub fn write_wide_csv<W: Write>(writer: W, series: &[ReturnSeries]) -> Result<(), IngestError> {
    let first = series.first().ok_or(IngestError::NoValueColumns)?;
    if series.iter().any(|s| s.dates() != first.dates()) {
        return Err(IngestError::DateMismatch);
    }
    let mut out = csv::Writer::from_writer(writer);
    let mut header = vec!["date".to_string()];
    header.extend(series.iter().map(|s| s.label().to_string()));
    out.write_record(&header)?;
    for (i, date) in first.dates().iter().enumerate() {
        let mut row = vec![date.format("%Y-%m-%d").to_string()];
        row.extend(series.iter().map(|s| format_return(s.returns()[i])));
        out.write_record(&row)?;
    }
    out.flush().map_err(|source| IngestError::Io {
        path: PathBuf::from("<output>"),
        source,
    })?;
    Ok(())
}

pub fn write_wide_csv_file(path: &Path, series: &[ReturnSeries]) -> Result<(), IngestError> {
    let file = File::create(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_wide_csv(file, series)
}

/// Two-regime Gaussian return generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub label: String,
    pub frequency: Frequency,
    pub start: NaiveDate,
    pub len: usize,
    /// First index of the second regime.
    pub break_index: usize,
    /// Per-period mean and volatility before and after the break.
    pub drift_before: f64,
    pub vol_before: f64,
    pub drift_after: f64,
    pub vol_after: f64,
}

impl FixtureSpec {
    /// A strong sign flip: Sharpe about +1.6 then -1.6 (daily, annualized).
    pub fn strong_break(len: usize, break_index: usize) -> Self {
        Self {
            label: "synthetic".into(),
            frequency: Frequency::Daily,
            start: default_start_date(),
            len,
            break_index,
            drift_before: 0.001,
            vol_before: 0.01,
            drift_after: -0.001,
            vol_after: 0.01,
        }
    }
}

/// Successive observation dates: weekdays for daily data, month ends for
/// monthly data, starting on or after `start`.
pub fn calendar(frequency: Frequency, start: NaiveDate, len: usize) -> Vec<NaiveDate> {
    match frequency {
        Frequency::Daily => start
            .iter_days()
            .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
            .take(len)
            .collect(),
        Frequency::Monthly => {
            let mut out = Vec::with_capacity(len);
            let (mut year, mut month) = (start.year(), start.month());
            while out.len() < len {
                let (ny, nm) = if month == 12 {
                    (year + 1, 1)
                } else {
                    (year, month + 1)
                };
                let end =
                    NaiveDate::from_ymd_opt(ny, nm, 1).expect("valid date") - Duration::days(1);
                out.push(end);
                (year, month) = (ny, nm);
            }
            out
        }
    }
}

/// Synthetic series from `spec`. Values are rounded to the precision
/// [`write_wide_csv`] writes, so writing and reloading is lossless.
pub fn make_fixture(seed: u64, spec: &FixtureSpec) -> Result<ReturnSeries, IngestError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng, mean: f64, vol: f64| -> f64 {
        if vol == 0.0 {
            mean
        } else {
            Normal::new(mean, vol)
                .expect("finite volatility")
                .sample(rng)
        }
    };
    let returns = (0..spec.len)
        .map(|i| {
            let r = if i < spec.break_index {
                draw(&mut rng, spec.drift_before, spec.vol_before)
            } else {
                draw(&mut rng, spec.drift_after, spec.vol_after)
            };
            format_return(r).parse::<f64>().expect("formatted float")
        })
        .collect();
    let dates = calendar(spec.frequency, spec.start, spec.len);
    Ok(ReturnSeries::new(
        spec.label.clone(),
        spec.frequency,
        dates,
        returns,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load_str(config: &IngestConfig, text: &str) -> Result<Vec<ReturnSeries>, IngestError> {
        load_reader(config, text.as_bytes())
    }

    #[test]
    fn rows_before_start_are_dropped() {
        let cfg = IngestConfig::new("-");
        let out = load_str(&cfg, "date,acc\n1979-12-31,0.01\n1980-01-02,0.02\n").unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].returns(), &[0.02]);
        assert_eq!(
            out[0].dates()[0],
            NaiveDate::from_ymd_opt(1980, 1, 2).unwrap()
        );
    }

    #[test]
    fn start_date_row_is_kept() {
        let cfg = IngestConfig::new("-");
        let out = load_str(&cfg, "date,acc\n1980-01-01,0.01\n1980-01-02,0.02\n").unwrap();
        assert_eq!(out[0].len(), 2);
    }

    #[test]
    fn header_only_is_empty() {
        let cfg = IngestConfig::new("-");
        assert!(matches!(
            load_str(&cfg, "date,acc\n"),
            Err(IngestError::EmptySeries { .. })
        ));
    }

    #[test]
    fn parse_errors_carry_position() {
        let cfg = IngestConfig::new("-");
        match load_str(&cfg, "date,acc\n1980-01-02,0.01\n1980-01-03,abc\n") {
            Err(IngestError::ParseError { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "acc");
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            load_str(&cfg, "date,acc\nyesterday,0.01\n"),
            Err(IngestError::ParseError { row: 2, .. })
        ));
    }

    #[test]
    fn out_of_order_dates() {
        let cfg = IngestConfig::new("-");
        assert!(matches!(
            load_str(&cfg, "date,acc\n1980-01-03,0.01\n1980-01-02,0.01\n"),
            Err(IngestError::DateOrderError { row: 3, .. })
        ));
    }

    #[test]
    fn missing_values() {
        let text = "date,a,b\n1980-01-02,0.01,\n1980-01-03,0.02,0.03\n";
        let mut cfg = IngestConfig::new("-");
        let out = load_str(&cfg, text).unwrap();
        assert_eq!(out[0].len(), 2);
        assert_eq!(out[1].len(), 1);
        cfg.missing_policy = MissingPolicy::Error;
        assert!(matches!(
            load_str(&cfg, text),
            Err(IngestError::MissingValue { row: 2, .. })
        ));
    }

    #[test]
    fn percent_and_log_inputs() {
        let mut cfg = IngestConfig::new("-");
        cfg.percent = true;
        let out = load_str(&cfg, "date,a\n1980-01-02,1.5\n").unwrap();
        assert!((out[0].returns()[0] - 0.015).abs() < 1e-15);
        cfg.percent = false;
        cfg.log_returns = true;
        let out = load_str(&cfg, "date,a\n1980-01-02,0.1\n").unwrap();
        assert!((out[0].returns()[0] - (0.1f64.exp() - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn long_layout_groups_by_name() {
        let mut cfg = IngestConfig::new("-");
        cfg.layout = Layout::Long {
            name_column: "name".into(),
            value_column: "ret".into(),
        };
        let text =
            "name,date,ret\nvalue,1980-01-02,0.01\nsize,1980-01-02,0.02\nvalue,1980-01-03,0.03\n";
        let out = load_str(&cfg, text).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].label(), "value");
        assert_eq!(out[0].returns(), &[0.01, 0.03]);
        assert_eq!(out[1].label(), "size");
    }

    #[test]
    fn selected_columns_and_missing_column() {
        let mut cfg = IngestConfig::new("-");
        cfg.layout = Layout::Wide {
            value_columns: Some(vec!["b".into()]),
        };
        let out = load_str(&cfg, "date,a,b\n1980-01-02,0.01,0.02\n").unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].label(), "b");
        cfg.layout = Layout::Wide {
            value_columns: Some(vec!["z".into()]),
        };
        assert!(matches!(
            load_str(&cfg, "date,a\n1980-01-02,0.01\n"),
            Err(IngestError::MissingColumn(_))
        ));
    }

    #[test]
    fn alternative_date_formats() {
        let expected = NaiveDate::from_ymd_opt(2021, 9, 23);
        assert_eq!(parse_date("2021-09-23"), expected);
        assert_eq!(parse_date("20210923"), expected);
        assert_eq!(parse_date("09/23/2021"), expected);
        assert_eq!(parse_date("23.09.2021"), None);
    }

    #[test]
    fn calendars() {
        let start = NaiveDate::from_ymd_opt(1980, 1, 1).unwrap();
        let days = calendar(Frequency::Daily, start, 10);
        assert!(days
            .iter()
            .all(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun)));
        let months = calendar(Frequency::Monthly, start, 3);
        assert_eq!(
            months,
            vec![
                NaiveDate::from_ymd_opt(1980, 1, 31).unwrap(),
                NaiveDate::from_ymd_opt(1980, 2, 29).unwrap(),
                NaiveDate::from_ymd_opt(1980, 3, 31).unwrap(),
            ]
        );
    }

    #[test]
    fn fixtures_are_deterministic() {
        let spec = FixtureSpec::strong_break(300, 150);
        assert_eq!(
            make_fixture(5, &spec).unwrap(),
            make_fixture(5, &spec).unwrap()
        );
        assert_ne!(
            make_fixture(5, &spec).unwrap(),
            make_fixture(6, &spec).unwrap()
        );
    }

    #[test]
    fn zero_vol_fixture_is_flat() {
        let mut spec = FixtureSpec::strong_break(20, 10);
        spec.vol_before = 0.0;
        spec.vol_after = 0.0;
        let s = make_fixture(1, &spec).unwrap();
        assert!(s.returns()[..10].iter().all(|&r| r == 0.001));
    }

    #[test]
    fn write_rejects_mismatched_dates() {
        let a = make_fixture(1, &FixtureSpec::strong_break(10, 5)).unwrap();
        let b = make_fixture(1, &FixtureSpec::strong_break(11, 5)).unwrap();
        assert!(matches!(
            write_wide_csv(Vec::new(), &[a, b]),
            Err(IngestError::DateMismatch)
        ));
    }
}
