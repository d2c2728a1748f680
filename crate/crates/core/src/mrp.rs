//! Minimum Regime Performance search.
//!
//! A partition of a length-`n` series with `s` splits is a set of boundary
//! positions `t_1 < ... < t_s`; segment `k` is the half-open range
//! `[t_{k-1}, t_k)` with `t_0 = 0` and `t_{s+1} = n`, and every segment must
//! hold at least `d` observations. MRP is the smallest segment metric over
//! every valid partition.
//!
//! Three routes compute it:
//!
//! * [`mrp_brute_force`] enumerates every partition. Exponential in `s`, used
//!   as the reference on small inputs.
//! * [`mrp_one_split`] is the linear scan for `s = 1`.
//! * [`mrp_fast`] uses the fact that the minimum over partitions of the
//!   minimum over segments equals the minimum over every window `[i, j)` that
//!   can appear as a segment of some valid partition. Whether a window can
//!   appear only depends on how many segments fit into the prefix `[0, i)`
//!   and the suffix `[j, n)`, so the search is `O(n^2)` constant-time metric
//!   evaluations.
//!
//! Segments on which the metric is undefined (zero dispersion) make their
//! partition invalid. All routes honour this, which is why the fast path
//! tracks per-prefix and per-suffix completability instead of plain counts.

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::Serialize;
use std::cmp::Ordering;
use thiserror::Error;

use crate::series::{MetricKind, PrefixTable, ReturnSeries, SeriesError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MrpError {
    #[error("a series of length {n} cannot hold {s} split(s) with minimum segment length {d}")]
    Infeasible { n: usize, s: usize, d: usize },
    #[error("every valid partition contains a segment on which the metric is undefined")]
    NoValidPartition,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// Binomial coefficient, saturating at `u128::MAX`.
fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) at every step
        let num = (n - i) as u128;
        acc = match acc.checked_mul(num) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Number of ways to place `s` splits in a series of length `n` so that all
/// `s + 1` segments have at least `d` observations.
///
/// Stars and bars: the `n - (s + 1) d` observations left after giving every
/// segment its minimum are distributed over `s + 1` segments.
pub fn count_valid_partitions(n: usize, s: usize, d: usize) -> u128 {
    let needed = (s + 1).saturating_mul(d);
    if n < needed {
        return 0;
    }
    let free = (n - needed) as u64;
    binomial(free + s as u64, s as u64)
}

/// An ordered split set with the series length and minimum segment length
/// it was validated against.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct PartitionSpec {
    splits: Vec<usize>,
    n: usize,
    d: usize,
}

impl PartitionSpec {
    pub fn new(splits: Vec<usize>, n: usize, d: usize) -> Result<Self, MrpError> {
        let spec = Self { splits, n, d };
        if spec.segments().any(|(start, end)| end < start + d.max(1)) {
            return Err(MrpError::InvalidParameter(format!(
                "splits {:?} do not leave {d} observations per segment of a length-{n} series",
                spec.splits
            )));
        }
        Ok(spec)
    }

    pub fn splits(&self) -> &[usize] {
        &self.splits
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn segment_count(&self) -> usize {
        self.splits.len() + 1
    }

    /// Half-open `(start, end)` bounds of each segment, in order.
    pub fn segments(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let starts = std::iter::once(0).chain(self.splits.iter().copied());
        let ends = self.splits.iter().copied().chain(std::iter::once(self.n));
        starts.zip(ends)
    }

    /// The same partition of the time-reversed series.
    pub fn mirrored(&self) -> PartitionSpec {
        PartitionSpec {
            splits: self.splits.iter().rev().map(|t| self.n - t).collect(),
            n: self.n,
            d: self.d,
        }
    }
}

/// Lexicographic stream of every valid partition.
#[derive(Debug, Clone)]
pub struct Partitions {
    n: usize,
    s: usize,
    d: usize,
    current: Option<Vec<usize>>,
}

impl Iterator for Partitions {
    type Item = PartitionSpec;

    fn next(&mut self) -> Option<PartitionSpec> {
        let splits = self.current.take()?;
        self.current = self.successor(&splits);
        Some(PartitionSpec {
            splits,
            n: self.n,
            d: self.d,
        })
    }
}

impl Partitions {
    // Largest value split k (0-based) can take.
    fn max_split(&self, k: usize) -> usize {
        self.n - (self.s - k) * self.d
    }

    fn successor(&self, splits: &[usize]) -> Option<Vec<usize>> {
        let k = (0..self.s).rev().find(|&k| splits[k] < self.max_split(k))?;
        let mut next = splits.to_vec();
        next[k] += 1;
        for m in k + 1..self.s {
            next[m] = next[m - 1] + self.d;
        }
        Some(next)
    }
}

pub fn enumerate_partitions(n: usize, s: usize, d: usize) -> Partitions {
    let feasible = d >= 1 && n >= (s + 1) * d;
    Partitions {
        n,
        s,
        d,
        current: feasible.then(|| (1..=s).map(|k| k * d).collect()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MrpResult {
    pub value: f64,
    pub optimal_splits: PartitionSpec,
    pub segment_metrics: Vec<f64>,
    pub argmin_segment: usize,
    /// Date of the last observation before each split.
    pub split_dates: Vec<NaiveDate>,
}

impl MrpResult {
    fn assemble(
        series: &ReturnSeries,
        table: &PrefixTable,
        kind: MetricKind,
        spec: PartitionSpec,
    ) -> Result<Self, MrpError> {
        let segment_metrics = spec
            .segments()
            .map(|(a, b)| table.segment_metric(a, b, kind))
            .collect::<Result<Vec<_>, _>>()?;
        let (argmin_segment, value) = lowest_first_min(&segment_metrics);
        let split_dates = spec
            .splits()
            .iter()
            .map(|&t| series.dates()[t - 1])
            .collect();
        Ok(Self {
            value,
            optimal_splits: spec,
            segment_metrics,
            argmin_segment,
            split_dates,
        })
    }

    /// Bounds of the segment that attains the minimum.
    pub fn argmin_window(&self) -> (usize, usize) {
        self.optimal_splits
            .segments()
            .nth(self.argmin_segment)
            .expect("argmin segment in range")
    }
}

fn lowest_first_min(values: &[f64]) -> (usize, f64) {
    let mut best = (0, values[0]);
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < best.1 {
            best = (i, v);
        }
    }
    best
}

fn check_parameters(n: usize, s: usize, d: usize, kind: MetricKind) -> Result<(), MrpError> {
    if s == 0 {
        return Err(MrpError::InvalidParameter(
            "split count must be at least 1".into(),
        ));
    }
    if s >= 64 {
        return Err(MrpError::InvalidParameter(
            "split count must be below 64".into(),
        ));
    }
    let min = kind.min_segment_len();
    if d < min {
        return Err(MrpError::InvalidParameter(format!(
            "minimum segment length {d} is below the {min} observations the metric needs"
        )));
    }
    if n < (s + 1).saturating_mul(d) {
        return Err(MrpError::Infeasible { n, s, d });
    }
    Ok(())
}

fn metric_or_invalid(
    table: &PrefixTable,
    start: usize,
    end: usize,
    kind: MetricKind,
) -> Result<Option<f64>, MrpError> {
    match table.segment_metric(start, end, kind) {
        Ok(v) => Ok(Some(v)),
        Err(SeriesError::ZeroVariance { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Reference MRP: the minimum segment metric over an exhaustive enumeration
/// of partitions. Ties go to the earliest split set in lexicographic order.
pub fn mrp_brute_force(
    series: &ReturnSeries,
    s: usize,
    d: usize,
    kind: MetricKind,
) -> Result<MrpResult, MrpError> {
    check_parameters(series.len(), s, d, kind)?;
    let table = PrefixTable::for_metric(series, kind)?;
    let mut best: Option<(f64, PartitionSpec)> = None;
    'partitions: for spec in enumerate_partitions(series.len(), s, d) {
        let mut worst = f64::INFINITY;
        for (a, b) in spec.segments() {
            match metric_or_invalid(&table, a, b, kind)? {
                Some(v) => worst = worst.min(v),
                None => continue 'partitions,
            }
        }
        if best.as_ref().is_none_or(|(v, _)| worst < *v) {
            best = Some((worst, spec));
        }
    }
    let (_, spec) = best.ok_or(MrpError::NoValidPartition)?;
    MrpResult::assemble(series, &table, kind, spec)
}

/// MRP with a single split by a linear scan over `t in [d, n - d]`.
pub fn mrp_one_split(
    series: &ReturnSeries,
    d: usize,
    kind: MetricKind,
) -> Result<MrpResult, MrpError> {
    let n = series.len();
    check_parameters(n, 1, d, kind)?;
    let table = PrefixTable::for_metric(series, kind)?;
    let mut best: Option<(f64, usize)> = None;
    for t in d..=n - d {
        let left = metric_or_invalid(&table, 0, t, kind)?;
        let right = metric_or_invalid(&table, t, n, kind)?;
        if let (Some(l), Some(r)) = (left, right) {
            let worst = l.min(r);
            if best.is_none_or(|(v, _)| worst < v) {
                best = Some((worst, t));
            }
        }
    }
    let (_, t) = best.ok_or(MrpError::NoValidPartition)?;
    MrpResult::assemble(series, &table, kind, PartitionSpec::new(vec![t], n, d)?)
}

/// Which windows can be completed into a valid partition.
///
/// `prefix[k][i]` is true when `[0, i)` splits into `k` valid segments,
/// `suffix[m][j]` when `[j, n)` splits into `m` valid segments.
struct Completability {
    n: usize,
    s: usize,
    d: usize,
    /// `[t, e)` is valid iff `t <= max_start[e]`.
    max_start: Vec<Option<usize>>,
    /// `[t, e)` is valid iff `e >= min_end[t]`.
    min_end: Vec<Option<usize>>,
    prefix: Vec<Vec<bool>>,
    suffix: Vec<Vec<bool>>,
    /// Bit `k` set when `prefix[k][i]`.
    prefix_mask: Vec<u64>,
    /// Bit `s - m` set when `suffix[m][j]`, so a window is feasible iff
    /// `prefix_mask[i] & suffix_mask[j] != 0`.
    suffix_mask: Vec<u64>,
    /// Ascending window ends `j` with `suffix_mask[j]` sharing a bit with
    /// the given prefix bit `k`, i.e. `suffix[s - k][j]`.
    ends_for_prefix: Vec<Vec<usize>>,
}

impl Completability {
    fn new(table: &PrefixTable, s: usize, d: usize, kind: MetricKind) -> Self {
        let x = table.returns();
        let n = x.len();
        // A segment is valid when it contains a "witness": a position whose
        // presence (with its predecessor, for dispersion) makes the metric
        // defined.
        let (max_start, min_end) = match kind {
            MetricKind::Sortino { mar } => {
                let witness = |p: usize| x[p] < mar;
                let mut max_start = vec![None; n + 1];
                let mut last = None;
                for (e, slot) in max_start.iter_mut().enumerate().skip(1) {
                    if witness(e - 1) {
                        last = Some(e - 1);
                    }
                    *slot = last;
                }
                let mut min_end = vec![None; n + 1];
                let mut next = None;
                for t in (0..n).rev() {
                    if witness(t) {
                        next = Some(t + 1);
                    }
                    min_end[t] = next;
                }
                (max_start, min_end)
            }
            MetricKind::Sharpe | MetricKind::InformationRatio => {
                // change at p means x[p] != x[p - 1]; [t, e) contains it iff t <= p - 1, e >= p + 1
                let mut max_start = vec![None; n + 1];
                let mut last = None;
                for e in 2..=n {
                    if x[e - 1] != x[e - 2] {
                        last = Some(e - 2);
                    }
                    max_start[e] = last;
                }
                let mut min_end = vec![None; n + 1];
                let mut next = None;
                for t in (0..n.saturating_sub(1)).rev() {
                    if x[t + 1] != x[t] {
                        next = Some(t + 2);
                    }
                    min_end[t] = next;
                }
                (max_start, min_end)
            }
        };

        let mut prefix = vec![vec![false; n + 1]; s + 1];
        prefix[0][0] = true;
        for k in 1..=s {
            let Some(first) = prefix[k - 1].iter().position(|&b| b) else {
                break;
            };
            for i in first + d..=n {
                prefix[k][i] = max_start[i].is_some_and(|m| first <= m.min(i - d));
            }
        }
        let mut suffix = vec![vec![false; n + 1]; s + 1];
        suffix[0][n] = true;
        for m in 1..=s {
            let Some(last) = suffix[m - 1].iter().rposition(|&b| b) else {
                break;
            };
            for j in 0..=last.saturating_sub(d) {
                if last < j + d {
                    break;
                }
                suffix[m][j] = min_end[j].is_some_and(|e| e <= last);
            }
        }

        let prefix_mask = (0..=n)
            .map(|i| {
                (0..=s)
                    .filter(|&k| prefix[k][i])
                    .fold(0u64, |acc, k| acc | 1 << k)
            })
            .collect();
        let suffix_mask = (0..=n)
            .map(|j| {
                (0..=s)
                    .filter(|&m| suffix[m][j])
                    .fold(0u64, |acc, m| acc | 1 << (s - m))
            })
            .collect();

        let ends_for_prefix = (0..=s)
            .map(|k| (0..=n).filter(|&j| suffix[s - k][j]).collect())
            .collect();

        Self {
            n,
            s,
            d,
            ends_for_prefix,
            max_start,
            min_end,
            prefix,
            suffix,
            prefix_mask,
            suffix_mask,
        }
    }

    /// Ends `j` for which `[i, j)` is feasible, ascending, without repeats.
    fn feasible_ends(&self, i: usize) -> Vec<usize> {
        let mask = self.prefix_mask[i];
        let mut ends: Vec<usize> = Vec::new();
        for k in (0..=self.s).filter(|&k| mask & (1 << k) != 0) {
            let list = &self.ends_for_prefix[k];
            let from = list.partition_point(|&j| j < i + self.d);
            ends.extend(list[from..].iter().copied().filter(|&j| self.valid(i, j)));
        }
        ends.sort_unstable();
        ends.dedup();
        ends
    }

    fn valid(&self, start: usize, end: usize) -> bool {
        self.max_start[end].is_some_and(|m| start <= m)
    }

    #[cfg(test)]
    fn feasible(&self, start: usize, end: usize) -> bool {
        end >= start + self.d
            && self.prefix_mask[start] & self.suffix_mask[end] != 0
            && self.valid(start, end)
    }

    /// Full split set around the window `[i, j)`, preferring the fewest
    /// prefix segments. Each side is cut left to right into the shortest
    /// valid segments, and its last segment takes the remainder.
    fn complete(&self, i: usize, j: usize) -> Vec<usize> {
        let common = self.prefix_mask[i] & self.suffix_mask[j];
        let k = common.trailing_zeros() as usize;
        let m = self.s - k;
        let mut splits = Vec::with_capacity(self.s);

        // prefix: the minimal true index of prefix[q] is a valid start for
        // the segment that follows it (see `new`), so the cuts are those minima
        for q in 1..k {
            let first = self.prefix[q]
                .iter()
                .position(|&b| b)
                .expect("completable prefix");
            splits.push(first);
        }
        if k > 0 {
            splits.push(i);
        }
        if m > 0 {
            splits.push(j);
        }
        let mut start = j;
        for remaining in (1..m).rev() {
            let lo = (start + self.d).max(self.min_end[start].expect("completable suffix"));
            let end = (lo..=self.n)
                .find(|&e| self.suffix[remaining][e])
                .expect("completable suffix");
            splits.push(end);
            start = end;
        }
        splits
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    value: f64,
    start: usize,
    end: usize,
}

impl Candidate {
    fn better(a: Candidate, b: Candidate) -> Candidate {
        match a.value.total_cmp(&b.value) {
            Ordering::Less => a,
            Ordering::Greater => b,
            Ordering::Equal => {
                if (a.start, a.end) <= (b.start, b.end) {
                    a
                } else {
                    b
                }
            }
        }
    }
}

/// MRP by minimising over every window that can appear as a segment of a
/// valid partition. Same value as [`mrp_brute_force`]; the reported
/// partition is the minimising window completed canonically.
///
/// Rows of the window scan run on the current rayon pool. The reduction is
/// a total order (value, then window position), so the result does not
/// depend on the number of workers.
pub fn mrp_fast(
    series: &ReturnSeries,
    s: usize,
    d: usize,
    kind: MetricKind,
) -> Result<MrpResult, MrpError> {
    let n = series.len();
    check_parameters(n, s, d, kind)?;
    let table = PrefixTable::for_metric(series, kind)?;
    let reach = Completability::new(&table, s, d, kind);

    let best = (0..n)
        .into_par_iter()
        .filter(|&i| reach.prefix_mask[i] != 0)
        .map(|i| -> Result<Option<Candidate>, MrpError> {
            let mut row: Option<Candidate> = None;
            for j in reach.feasible_ends(i) {
                let value = table.segment_metric(i, j, kind)?;
                let c = Candidate {
                    value,
                    start: i,
                    end: j,
                };
                row = Some(row.map_or(c, |r| Candidate::better(r, c)));
            }
            Ok(row)
        })
        .try_reduce(
            || None,
            |a, b| {
                Ok(match (a, b) {
                    (Some(a), Some(b)) => Some(Candidate::better(a, b)),
                    (a, b) => a.or(b),
                })
            },
        )?;

    let best = best.ok_or(MrpError::NoValidPartition)?;
    let splits = reach.complete(best.start, best.end);
    let spec = PartitionSpec::new(splits, n, d)?;
    let mut result = MrpResult::assemble(series, &table, kind, spec)?;
    // Another segment of the completion can tie the window; report the window.
    if let Some(pos) = result
        .optimal_splits
        .segments()
        .position(|w| w == (best.start, best.end))
    {
        result.argmin_segment = pos;
    }
    result.value = best.value;
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeftRightReport {
    pub mrp: f64,
    pub left_sr: f64,
    pub right_sr: f64,
    pub split_index: usize,
    /// Date of the last observation of the left segment.
    pub split_date: NaiveDate,
}

/// Both segment metrics at the single-split MRP optimum.
pub fn left_right_report(
    series: &ReturnSeries,
    d: usize,
    kind: MetricKind,
) -> Result<LeftRightReport, MrpError> {
    let result = mrp_one_split(series, d, kind)?;
    Ok(LeftRightReport {
        mrp: result.value,
        left_sr: result.segment_metrics[0],
        right_sr: result.segment_metrics[1],
        split_index: result.optimal_splits.splits()[0],
        split_date: result.split_dates[0],
    })
}
