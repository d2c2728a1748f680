//! Command-line front end.
//!
//! Every subcommand builds a [`Table`] and writes it as CSV or JSON. Numbers
//! are rounded to six decimals once, when the table is built, so both formats
//! carry the same values. Exit codes: 0 success, 1 data or compute error,
//! 2 usage error.

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::analytics::{
    average_grids, block_bootstrap_mrp, factor_report, frontier, robustness_correlations,
    robustness_vectors, sensitivity_grid, AnalyticsError, FactorReport, GridCell, PortfolioSpec,
    SensitivityGrid, Span,
};
use crate::bias::{
    bias_asymptotic, bias_exact, expected_min_asymptotic, expected_min_exact,
    gumbel_limit_diagnostic, simulate_min_model, summarize, BiasModel, Sampler,
};
use crate::ingest::{
    load_csv, make_fixture, parse_date, write_wide_csv, FixtureSpec, IngestConfig, Layout,
    MissingPolicy,
};
use crate::mrp::{mrp_fast, MrpResult};
use crate::series::{active_returns, Frequency, MetricKind, ReturnSeries};

/// Marker written in place of a value that cannot be computed.
pub const INFEASIBLE: &str = "Infeasible";

#[derive(Debug, Parser)]
#[command(name = "mrp", version, about = "Minimum regime performance analytics")]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Full-window Sharpe and single-split MRP per factor.
    Report(ReportArgs),
    /// Sharpe versus MRP with dominance flags.
    Frontier(ReportArgs),
    /// MRP minus Sharpe over lookback and minimum-segment grids.
    Sensitivity(SensitivityArgs),
    /// Cross-factor correlations of MRP with other robustness measures.
    Correlations(CorrelationArgs),
    /// MRP of a weighted combination of strategies.
    Portfolio(PortfolioArgs),
    /// Circular block bootstrap distribution of MRP.
    Bootstrap(BootstrapArgs),
    /// Expected minimum of N normal segment metrics: exact, asymptotic, simulated.
    Bias(BiasArgs),
    /// Gumbel limit and drift diagnostics for the minimum.
    Simulate(SimulateArgs),
    /// Write a synthetic two-regime return file.
    Fixture(FixtureArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Sharpe,
    Sortino,
    #[value(alias = "ir")]
    InformationRatio,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Worker threads (0 = all cores). Results do not depend on this.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// File of `key = value` lines supplying flag defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_parser = parse_iso_date, default_value = "1980-01-01")]
    pub start_date: NaiveDate,
    #[arg(long, default_value = "daily")]
    pub frequency: Frequency,
    #[arg(long, default_value = "date")]
    pub date_column: String,
    /// Comma-separated factor columns; all non-date columns by default.
    #[arg(long, value_delimiter = ',')]
    pub columns: Option<Vec<String>>,
    /// Long layout: `name_column,value_column`.
    #[arg(long, value_delimiter = ',', num_args = 2, conflicts_with = "columns")]
    pub long: Option<Vec<String>>,
    /// Fail on blank cells instead of skipping them.
    #[arg(long)]
    pub strict_missing: bool,
    /// Input values are percentages.
    #[arg(long)]
    pub percent: bool,
    /// Input values are log returns.
    #[arg(long)]
    pub log_returns: bool,
    #[arg(long, value_enum, default_value = "sharpe")]
    pub metric: MetricArg,
    /// Minimum acceptable return for Sortino.
    #[arg(long, default_value_t = 0.0)]
    pub mar: f64,
    /// Benchmark column for the information ratio.
    #[arg(long)]
    pub benchmark: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "40y")]
    pub lookback: Span,
    #[arg(long, default_value = "2y")]
    pub min_segment: Span,
    /// Adds an `mrp_s` column when above 1.
    #[arg(long, default_value_t = 1)]
    pub splits: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SensitivityArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// `start:end:stepU` or a comma list of spans.
    #[arg(long, default_value = "10:40:10y")]
    pub lookbacks: SpanList,
    #[arg(long, default_value = "1:5:1y")]
    pub ds: SpanList,
    #[arg(long, default_value_t = 1)]
    pub splits: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct CorrelationArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "40y")]
    pub lookback: Span,
    #[arg(long, default_value = "2y")]
    pub min_segment: Span,
    #[arg(long, default_value_t = 1)]
    pub splits: usize,
    /// Rolling Sharpe window in periods (252 daily, 36 monthly by default).
    #[arg(long)]
    pub window: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct PortfolioArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// One weight per loaded series, in column order.
    #[arg(
        long,
        value_delimiter = ',',
        allow_negative_numbers = true,
        required = true
    )]
    pub weights: Vec<f64>,
    /// Trailing window; the whole aligned history by default.
    #[arg(long)]
    pub lookback: Option<Span>,
    #[arg(long, default_value = "2y")]
    pub min_segment: Span,
    #[arg(long, default_value_t = 1)]
    pub splits: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct BootstrapArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub lookback: Option<Span>,
    #[arg(long, default_value = "2y")]
    pub min_segment: Span,
    #[arg(long, default_value_t = 1)]
    pub splits: usize,
    /// Block length; the minimum segment by default.
    #[arg(long)]
    pub block_len: Option<Span>,
    #[arg(long, default_value_t = 1000)]
    pub replicates: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct BiasArgs {
    /// Number of segment metrics the minimum is taken over (comma list).
    #[arg(long = "N", value_delimiter = ',', required = true)]
    pub n: Vec<u64>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub mu: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Monte Carlo trials; 0 skips simulation.
    #[arg(long, default_value_t = 100_000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SamplerArg {
    Direct,
    Inverse,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long = "N", required = true)]
    pub n: u64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub mu: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 100_000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "inverse")]
    pub sampler: SamplerArg,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    #[arg(long, default_value_t = 2520)]
    pub len: usize,
    /// First index of the second regime; the midpoint by default.
    #[arg(long)]
    pub break_index: Option<usize>,
    #[arg(long, default_value_t = 0.001, allow_negative_numbers = true)]
    pub drift_before: f64,
    #[arg(long, default_value_t = 0.01)]
    pub vol_before: f64,
    #[arg(long, default_value_t = -0.001, allow_negative_numbers = true)]
    pub drift_after: f64,
    #[arg(long, default_value_t = 0.01)]
    pub vol_after: f64,
    /// Number of columns; column k uses seed + k.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_parser = parse_iso_date, default_value = "1980-01-01")]
    pub start_date: NaiveDate,
    #[arg(long, default_value = "daily")]
    pub frequency: Frequency,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn parse_iso_date(text: &str) -> Result<NaiveDate, String> {
    parse_date(text).ok_or_else(|| format!("'{text}' is not a date"))
}

/// A list of spans sharing one unit.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanList(pub Vec<Span>);

impl std::str::FromStr for SpanList {
    type Err = String;

    /// `10:40:10y` expands to 10y,20y,30y,40y; `504p,756p` is taken literally.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let spans: Vec<Span> = if s.contains(':') {
            let unit = s.chars().last().filter(|c| *c == 'y' || *c == 'p');
            let unit = unit.ok_or_else(|| format!("range '{s}' needs a y or p suffix"))?;
            let body = &s[..s.len() - 1];
            let parts: Vec<f64> = body
                .split(':')
                .map(|p| p.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| format!("'{s}' is not start:end:step"))?;
            let [start, end, step] = parts[..] else {
                return Err(format!("'{s}' is not start:end:step"));
            };
            if !(step > 0.0 && start > 0.0 && end >= start) {
                return Err(format!("'{s}' is not an increasing range"));
            }
            let count = ((end - start) / step + 1e-9).floor() as usize + 1;
            (0..count)
                .map(|k| format!("{}{unit}", start + k as f64 * step).parse())
                .collect::<Result<_, _>>()?
        } else {
            s.split(',').map(str::parse).collect::<Result<_, _>>()?
        };
        let years = spans.iter().any(|x| matches!(x, Span::Years(_)));
        let periods = spans.iter().any(|x| matches!(x, Span::Periods(_)));
        if years && periods {
            return Err(format!("'{s}' mixes year and period units"));
        }
        Ok(SpanList(spans))
    }
}

/// One table cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Number(f64),
    Marker(&'static str),
    Empty,
}

impl Cell {
    /// Rounded to six decimals so CSV and JSON agree.
    pub fn num(value: f64) -> Cell {
        if value.is_finite() {
            Cell::Number(format!("{value:.6}").parse().expect("formatted float"))
        } else {
            Cell::Empty
        }
    }

    pub fn int(value: impl Into<u128>) -> Cell {
        Cell::Text(value.into().to_string())
    }

    fn csv(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Number(v) => format!("{v:.6}"),
            Cell::Marker(m) => m.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Number(v) => json!(v),
            Cell::Marker(m) => Value::String(m.to_string()),
            Cell::Empty => Value::Null,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(columns: &[&'static str]) -> Self {
        Table {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::csv))
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    /// `{"columns": [...], "rows": [[...], ...]}`.
    pub fn to_json(&self) -> String {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| Value::Array(r.iter().map(Cell::json).collect()))
            .collect();
        let doc = json!({ "columns": self.columns, "rows": rows });
        let mut text = serde_json::to_string_pretty(&doc).expect("json");
        text.push('\n');
        text
    }
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
}

impl<E: std::error::Error> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Data(e.to_string())
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<String>,
{
    let args: Vec<String> = args.into_iter().map(Into::into).collect();
    let args = match apply_config(args) {
        Ok(a) => a,
        Err(msg) => {
            let _ = writeln!(stderr, "error: {msg}");
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(stdout, "{text}");
            } else {
                let _ = write!(stderr, "{text}");
            }
            return code;
        }
    };
    match dispatch(cli.command, stdout, stderr) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            2
        }
        Err(Failure::Data(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            1
        }
    }
}

/// Splices `--key value` pairs from a `--config` file in front of the
/// command-line flags, which win because later flags override earlier ones.
fn apply_config(args: Vec<String>) -> Result<Vec<String>, String> {
    let Some(pos) = args
        .iter()
        .position(|a| a == "--config" || a.starts_with("--config="))
    else {
        return Ok(args);
    };
    let path = match args[pos].strip_prefix("--config=") {
        Some(p) => p.to_string(),
        None => args
            .get(pos + 1)
            .cloned()
            .ok_or("--config needs a file path")?,
    };
    let text = fs::read_to_string(&path).map_err(|e| format!("cannot read {path}: {e}"))?;
    let mut injected = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("{path}:{}: expected key = value", lineno + 1))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        match value {
            "true" => injected.push(format!("--{key}")),
            "false" => {}
            _ => injected.push(format!("--{key}={value}")),
        }
    }
    // subcommand sits at index 1; anything before it is malformed anyway
    let split = 2.min(args.len());
    let mut out = args[..split].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[split..]);
    Ok(out)
}

fn dispatch(
    command: Command,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<(), Failure> {
    if let Command::Fixture(args) = command {
        return fixture(&args, stdout);
    }
    let output = match &command {
        Command::Report(a) | Command::Frontier(a) => &a.output,
        Command::Sensitivity(a) => &a.output,
        Command::Correlations(a) => &a.output,
        Command::Portfolio(a) => &a.output,
        Command::Bootstrap(a) => &a.output,
        Command::Bias(a) => &a.output,
        Command::Simulate(a) => &a.output,
        Command::Fixture(_) => unreachable!(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(output.jobs)
        .build()
        .map_err(|e| Failure::Data(e.to_string()))?;
    let mut warnings = Vec::new();
    let table = pool.install(|| match &command {
        Command::Report(a) => report(a, &mut warnings),
        Command::Frontier(a) => frontier_table(a, &mut warnings),
        Command::Sensitivity(a) => sensitivity(a),
        Command::Correlations(a) => correlations(a),
        Command::Portfolio(a) => portfolio(a),
        Command::Bootstrap(a) => bootstrap(a),
        Command::Bias(a) => bias(a),
        Command::Simulate(a) => simulate(a),
        Command::Fixture(_) => unreachable!(),
    });
    for w in warnings {
        let _ = writeln!(stderr, "warning: {w}");
    }
    let table = table?;
    let text = match output.format {
        Format::Csv => table.to_csv(),
        Format::Json => table.to_json(),
    };
    emit(output.out.as_ref(), &text, stdout)
}

fn emit(path: Option<&PathBuf>, text: &str, stdout: &mut dyn Write) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Data(format!("{}: {e}", p.display()))),
        None => Ok(stdout.write_all(text.as_bytes())?),
    }
}

impl DataArgs {
    fn kind(&self) -> MetricKind {
        match self.metric {
            MetricArg::Sharpe => MetricKind::Sharpe,
            MetricArg::Sortino => MetricKind::Sortino { mar: self.mar },
            MetricArg::InformationRatio => MetricKind::InformationRatio,
        }
    }

    fn load(&self) -> Result<Vec<ReturnSeries>, Failure> {
        let mut config = IngestConfig::new(&self.input);
        config.date_column = self.date_column.clone();
        config.start_date = self.start_date;
        config.frequency = self.frequency;
        config.percent = self.percent;
        config.log_returns = self.log_returns;
        if self.strict_missing {
            config.missing_policy = MissingPolicy::Error;
        }
        config.layout = match &self.long {
            Some(cols) => Layout::Long {
                name_column: cols[0].clone(),
                value_column: cols[1].clone(),
            },
            None => Layout::Wide {
                value_columns: self.columns.clone(),
            },
        };
        let series = load_csv(&config)?;
        match (&self.benchmark, self.metric) {
            (None, MetricArg::InformationRatio) => {
                Err(usage("--metric information-ratio needs --benchmark"))
            }
            (Some(_), m) if m != MetricArg::InformationRatio => Err(usage(
                "--benchmark only applies to --metric information-ratio",
            )),
            (None, _) => Ok(series),
            (Some(name), _) => {
                let bench = series
                    .iter()
                    .find(|s| s.label() == name)
                    .ok_or_else(|| Failure::Data(format!("benchmark column '{name}' not loaded")))?
                    .clone();
                let active: Result<Vec<_>, _> = series
                    .iter()
                    .filter(|s| s.label() != name)
                    .map(|s| active_returns(s, &bench))
                    .collect();
                Ok(active?)
            }
        }
    }
}

fn trailing(series: &ReturnSeries, lookback: Option<Span>) -> Result<ReturnSeries, Failure> {
    let Some(lookback) = lookback else {
        return Ok(series.clone());
    };
    let periods = lookback.periods(series.frequency());
    if periods > series.len() {
        return Err(Failure::Data(format!(
            "{}: lookback {lookback} needs {periods} periods, {} available",
            series.label(),
            series.len()
        )));
    }
    Ok(series.tail(periods))
}

fn us_date(date: NaiveDate) -> String {
    date.format("%m/%d/%y").to_string()
}

fn iso(date: NaiveDate) -> String {
    date.format("%Y-%m-%d").to_string()
}

type ReportOutcome = Result<FactorReport, AnalyticsError>;

fn collect_reports(
    args: &ReportArgs,
    warnings: &mut Vec<String>,
) -> Result<Vec<(ReturnSeries, ReportOutcome)>, Failure> {
    use rayon::prelude::*;
    let kind = args.data.kind();
    let series = args.data.load()?;
    let reports: Vec<_> = series
        .par_iter()
        .map(|s| factor_report(s, args.lookback, args.min_segment, kind))
        .collect();
    let mut out = Vec::with_capacity(series.len());
    for (s, r) in series.into_iter().zip(reports) {
        match &r {
            Err(AnalyticsError::Infeasible(msg)) => warnings.push(msg.clone()),
            Err(e) => return Err(Failure::Data(format!("{}: {e}", s.label()))),
            Ok(_) => {}
        }
        out.push((s, r));
    }
    Ok(out)
}

fn report(args: &ReportArgs, warnings: &mut Vec<String>) -> Result<Table, Failure> {
    if args.splits == 0 {
        return Err(usage("--splits must be at least 1"));
    }
    let extra = args.splits > 1;
    let mut columns = vec![
        "label",
        "sharpe",
        "mrp1",
        "left_sr",
        "right_sr",
        "split_date",
    ];
    if extra {
        columns.push("mrp_s");
    }
    let mut table = Table::new(&columns);
    let kind = args.data.kind();
    for (series, report) in collect_reports(args, warnings)? {
        let mut row = vec![Cell::Text(series.label().to_string())];
        match report {
            Ok(r) => {
                row.extend([
                    Cell::num(r.full_sharpe),
                    Cell::num(r.mrp1),
                    Cell::num(r.left_sr),
                    Cell::num(r.right_sr),
                    Cell::Text(us_date(r.split_date)),
                ]);
                if extra {
                    let window = trailing(&series, Some(args.lookback))?;
                    let d = args.min_segment.periods(series.frequency());
                    row.push(match mrp_fast(&window, args.splits, d, kind) {
                        Ok(m) => Cell::num(m.value),
                        Err(_) => Cell::Marker(INFEASIBLE),
                    });
                }
            }
            Err(_) => row.extend(std::iter::repeat_n(
                Cell::Marker(INFEASIBLE),
                columns.len() - 1,
            )),
        }
        table.push(row);
    }
    Ok(table)
}

fn frontier_table(args: &ReportArgs, warnings: &mut Vec<String>) -> Result<Table, Failure> {
    let reports: Vec<FactorReport> = collect_reports(args, warnings)?
        .into_iter()
        .filter_map(|(_, r)| r.ok())
        .collect();
    if reports.is_empty() {
        return Err(Failure::Data("no factor has a feasible report".into()));
    }
    let mut table = Table::new(&["label", "sharpe", "mrp", "dominated", "dominated_by"]);
    for p in frontier(&reports) {
        table.push(vec![
            Cell::Text(p.label),
            Cell::num(p.x),
            Cell::num(p.y),
            Cell::Text(p.dominated.to_string()),
            Cell::Text(p.dominated_by.join(";")),
        ]);
    }
    Ok(table)
}

fn grid_rows(table: &mut Table, grid: &SensitivityGrid) {
    for (i, lookback) in grid.lookbacks.iter().enumerate() {
        for (k, d) in grid.ds.iter().enumerate() {
            table.push(vec![
                Cell::Text(grid.label.clone()),
                Cell::Text(lookback.to_string()),
                Cell::Text(d.to_string()),
                match grid.cells[i][k] {
                    GridCell::Value(v) => Cell::num(v),
                    GridCell::Infeasible => Cell::Marker(INFEASIBLE),
                },
            ]);
        }
    }
}

fn sensitivity(args: &SensitivityArgs) -> Result<Table, Failure> {
    if args.splits == 0 {
        return Err(usage("--splits must be at least 1"));
    }
    let kind = args.data.kind();
    let series = args.data.load()?;
    let grids = series
        .iter()
        .map(|s| sensitivity_grid(s, &args.lookbacks.0, &args.ds.0, args.splits, kind))
        .collect::<Result<Vec<_>, _>>()?;
    let mut table = Table::new(&["label", "lookback", "d", "mrp_minus_sharpe"]);
    for grid in &grids {
        grid_rows(&mut table, grid);
    }
    if grids.len() > 1 {
        grid_rows(&mut table, &average_grids(&grids)?);
    }
    Ok(table)
}

fn correlations(args: &CorrelationArgs) -> Result<Table, Failure> {
    let series = args.data.load()?;
    let vectors = robustness_vectors(
        &series,
        args.lookback,
        args.min_segment,
        args.splits,
        args.window,
        args.data.kind(),
    )?;
    let matrix = robustness_correlations(&vectors)?;
    let mut columns = vec!["metric"];
    columns.extend(crate::analytics::RobustnessVectors::NAMES);
    let mut table = Table::new(&columns);
    for (name, row) in matrix.names.iter().zip(&matrix.values) {
        let mut cells = vec![Cell::Text(name.clone())];
        cells.extend(row.iter().map(|v| Cell::num(*v)));
        table.push(cells);
    }
    Ok(table)
}

fn partition_rows(table: &mut Table, label: &str, series: &ReturnSeries, result: &MrpResult) {
    let dates = series.dates();
    for (k, ((start, end), metric)) in result
        .optimal_splits
        .segments()
        .zip(&result.segment_metrics)
        .enumerate()
    {
        table.push(vec![
            Cell::Text(label.to_string()),
            Cell::num(result.value),
            Cell::int(k as u64),
            Cell::Text(iso(dates[start])),
            Cell::Text(iso(dates[end - 1])),
            Cell::num(*metric),
            Cell::Text((k == result.argmin_segment).to_string()),
        ]);
    }
}

fn portfolio(args: &PortfolioArgs) -> Result<Table, Failure> {
    let strategies = args.data.load()?;
    if strategies.len() != args.weights.len() {
        return Err(usage(format!(
            "{} weights given for {} series",
            args.weights.len(),
            strategies.len()
        )));
    }
    let spec = PortfolioSpec {
        weights: args.weights.clone(),
        strategies,
    };
    let aggregate = trailing(&spec.aggregate()?, args.lookback)?;
    let d = args.min_segment.periods(aggregate.frequency());
    let result = mrp_fast(&aggregate, args.splits, d, args.data.kind())?;
    let mut table = Table::new(&[
        "label",
        "mrp",
        "segment",
        "start_date",
        "end_date",
        "metric",
        "is_min",
    ]);
    partition_rows(&mut table, aggregate.label(), &aggregate, &result);
    Ok(table)
}

fn bootstrap(args: &BootstrapArgs) -> Result<Table, Failure> {
    let kind = args.data.kind();
    let mut table = Table::new(&[
        "label",
        "original",
        "mean",
        "sd",
        "min",
        "q05",
        "q25",
        "q50",
        "q75",
        "q95",
        "max",
        "replicates",
        "failed",
    ]);
    for series in args.data.load()? {
        let window = trailing(&series, args.lookback)?;
        let freq = window.frequency();
        let d = args.min_segment.periods(freq);
        let block = args.block_len.unwrap_or(args.min_segment).periods(freq);
        let summary = block_bootstrap_mrp(
            &window,
            block,
            args.replicates,
            args.splits,
            d,
            kind,
            args.seed,
        )
        .map_err(|e| Failure::Data(format!("{}: {e}", series.label())))?;
        let mut row = vec![
            Cell::Text(series.label().to_string()),
            Cell::num(summary.original),
            Cell::num(summary.mean),
            Cell::num(summary.sd),
            Cell::num(summary.min),
        ];
        row.extend(summary.quantiles.iter().map(|(_, q)| Cell::num(*q)));
        row.extend([
            Cell::num(summary.max),
            Cell::int(summary.replicates as u64),
            Cell::int(summary.failed as u64),
        ]);
        table.push(row);
    }
    Ok(table)
}

fn bias(args: &BiasArgs) -> Result<Table, Failure> {
    let mut table = Table::new(&[
        "n",
        "exact_mean",
        "asymptotic_mean",
        "simulated_mean",
        "simulated_se",
        "exact_bias",
        "asymptotic_bias",
    ]);
    for &n in &args.n {
        let model = BiasModel::flat(args.mu, args.sigma, n).map_err(|e| usage(e.to_string()))?;
        let optional = |r: Result<f64, _>| r.map_or(Cell::Empty, Cell::num);
        let (sim_mean, sim_se) = if args.trials > 0 {
            let s = summarize(&simulate_min_model(&model, args.trials, args.seed));
            (Cell::num(s.mean), Cell::num(s.se))
        } else {
            (Cell::Empty, Cell::Empty)
        };
        table.push(vec![
            Cell::int(n),
            Cell::num(expected_min_exact(&model)?),
            optional(expected_min_asymptotic(&model)),
            sim_mean,
            sim_se,
            Cell::num(bias_exact(&model)?),
            optional(bias_asymptotic(&model)),
        ]);
    }
    Ok(table)
}

fn simulate(args: &SimulateArgs) -> Result<Table, Failure> {
    let model = BiasModel::flat(args.mu, args.sigma, args.n).map_err(|e| usage(e.to_string()))?;
    let sampler = match args.sampler {
        SamplerArg::Direct => Sampler::Direct,
        SamplerArg::Inverse => Sampler::InverseCdf,
    };
    let diag = gumbel_limit_diagnostic(&model, args.trials, args.seed, sampler)
        .map_err(|e| usage(e.to_string()))?;
    let mut table = Table::new(&[
        "n",
        "simulated_mean",
        "simulated_se",
        "exact_mean",
        "gumbel_b",
        "gumbel_a",
        "ks_distance",
    ]);
    for row in &diag.drift {
        let last = row.count == diag.count;
        let at_n = |v: f64| if last { Cell::num(v) } else { Cell::Empty };
        table.push(vec![
            Cell::int(row.count),
            Cell::num(row.simulated.mean),
            Cell::num(row.simulated.se),
            Cell::num(row.exact_mean),
            at_n(diag.constants.b),
            at_n(diag.constants.a),
            at_n(diag.ks_distance),
        ]);
    }
    Ok(table)
}

fn fixture(args: &FixtureArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    if args.len == 0 || args.count == 0 {
        return Err(usage("--len and --count must be positive"));
    }
    let break_index = args.break_index.unwrap_or(args.len / 2);
    if break_index > args.len {
        return Err(usage("--break-index beyond --len"));
    }
    let series = (0..args.count)
        .map(|k| {
            let spec = FixtureSpec {
                label: if args.count == 1 {
                    "synthetic".into()
                } else {
                    format!("synthetic_{k}")
                },
                frequency: args.frequency,
                start: args.start_date,
                len: args.len,
                break_index,
                drift_before: args.drift_before,
                vol_before: args.vol_before,
                drift_after: args.drift_after,
                vol_after: args.vol_after,
            };
            make_fixture(args.seed + k as u64, &spec)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut buf = Vec::new();
    write_wide_csv(&mut buf, &series)?;
    emit(args.out.as_ref(), &String::from_utf8_lossy(&buf), stdout)
}

/// Entry point for the `mrp` binary.
pub fn main_with_env() -> i32 {
    let stdout = io::stdout();
    let stderr = io::stderr();
    run(std::env::args(), &mut stdout.lock(), &mut stderr.lock())
}
