//! Shared generators and direct-computation oracles for the integration tests.
//! The oracles deliberately avoid the library's prefix tables.

#![allow(dead_code)]

use std::path::PathBuf;

use mrp_core::{Frequency, ReturnSeries};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn gaussian(seed: u64, n: usize, mean: f64, sd: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Normal::new(mean, sd).unwrap();
    (0..n).map(|_| dist.sample(&mut rng)).collect()
}

pub fn series(values: Vec<f64>) -> ReturnSeries {
    ReturnSeries::from_returns("x", Frequency::Daily, values).unwrap()
}

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("data")
        .join(name)
}

/// Two-pass annualized Sharpe with the sample standard deviation.
pub fn sharpe_two_pass(x: &[f64], periods_per_year: f64) -> Option<f64> {
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (var > 0.0).then(|| mean / var.sqrt() * periods_per_year.sqrt())
}

pub fn sortino_direct(x: &[f64], mar: f64, periods_per_year: f64) -> Option<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let dd = (x.iter().map(|v| (v - mar).min(0.0).powi(2)).sum::<f64>() / n).sqrt();
    (dd > 0.0).then(|| (mean - mar) / dd * periods_per_year.sqrt())
}

/// Worst peak-to-trough loss by checking every (peak, trough) pair.
pub fn drawdown_all_pairs(x: &[f64]) -> f64 {
    let mut wealth = vec![1.0];
    for r in x {
        wealth.push(wealth.last().unwrap() * (1.0 + r));
    }
    let mut worst = 0.0_f64;
    for i in 0..wealth.len() {
        for j in i + 1..wealth.len() {
            worst = worst.max(1.0 - wealth[j] / wealth[i]);
        }
    }
    worst
}

/// Sample standard deviation of two-pass Sharpe ratios over every full window.
pub fn rolling_vol_direct(x: &[f64], window: usize, periods_per_year: f64) -> f64 {
    let sharpes: Vec<f64> = x
        .windows(window)
        .filter_map(|w| sharpe_two_pass(w, periods_per_year))
        .collect();
    let n = sharpes.len() as f64;
    let mean = sharpes.iter().sum::<f64>() / n;
    (sharpes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Minimum metric over every split set, by nested recursion over split positions.
pub fn mrp_recursive(
    x: &[f64],
    s: usize,
    d: usize,
    metric: &dyn Fn(&[f64]) -> Option<f64>,
) -> Option<f64> {
    fn go(
        x: &[f64],
        start: usize,
        left: usize,
        d: usize,
        worst: f64,
        metric: &dyn Fn(&[f64]) -> Option<f64>,
        best: &mut Option<f64>,
    ) {
        let n = x.len();
        if left == 0 {
            if n - start < d {
                return;
            }
            let Some(m) = metric(&x[start..]) else { return };
            let value = worst.min(m);
            if best.is_none_or(|b| value < b) {
                *best = Some(value);
            }
            return;
        }
        for t in start + d..=n.saturating_sub(left * d) {
            if t > n {
                break;
            }
            if let Some(m) = metric(&x[start..t]) {
                go(x, t, left - 1, d, worst.min(m), metric, best);
            }
        }
    }
    let mut best = None;
    go(x, 0, s, d, f64::INFINITY, metric, &mut best);
    best
}

/// Splits a CSV body into rows of cells (no quoting in our outputs).
pub fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

/// Relative agreement at twelve significant digits.
pub fn same_12(a: f64, b: f64) -> bool {
    format!("{a:.11e}") == format!("{b:.11e}")
}
