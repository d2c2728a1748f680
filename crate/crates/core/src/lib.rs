//! Minimum Regime Performance (MRP): the worst risk-adjusted performance of a
//! return series over every way of cutting it into contiguous regimes of a
//! minimum length.
//!
//! * [`series`]: return series, prefix-sum segment metrics, drawdown and
//!   rolling Sharpe volatility.
//! * [`mrp`]: partition counting and enumeration, and the MRP search.
//! * [`bias`]: bias of MRP under an i.i.d. normal model of segment metrics,
//!   exact and asymptotic, with Monte Carlo checks.
//! * [`analytics`]: factor reports, the Sharpe/MRP frontier, sensitivity
//!   grids, cross-metric correlations, portfolio MRP and block bootstrap.
//! * [`ingest`]: CSV loading and synthetic fixtures.
//! * [`cli`]: the `mrp` command-line tool.

pub mod analytics;
pub mod bias;
pub mod cli;
pub mod ingest;
pub mod mrp;
pub mod series;

pub use mrp::{
    count_valid_partitions, enumerate_partitions, left_right_report, mrp_brute_force, mrp_fast,
    mrp_one_split, MrpError, MrpResult, PartitionSpec,
};
pub use series::{Frequency, MetricKind, PrefixTable, ReturnSeries, SeriesError};
