mod common;

use common::*;
use mrp_core::analytics::{
    block_bootstrap_mrp, pearson, robustness_correlations, sensitivity_grid, GridCell,
    PortfolioSpec, RobustnessVectors, Span,
};
use mrp_core::bias::{
    bias_asymptotic, expected_min_exact, gumbel_constants, simulate_min_model, summarize, BiasModel,
};
use mrp_core::ingest::{load_csv, write_wide_csv_file, IngestConfig};
use mrp_core::series::{max_drawdown, rolling_sharpe_volatility};
use mrp_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn prefix_sharpe_matches_two_pass() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..200 {
        let n = rng.random_range(2..300);
        let offset = [0.0, 0.02, 5.0][case % 3];
        let x: Vec<f64> = gaussian(case as u64, n, offset + 0.0004, 0.01);
        let table = PrefixTable::from_slice(&x, 252).unwrap();
        for _ in 0..5 {
            let a = rng.random_range(0..n - 1);
            let b = rng.random_range(a + 2..=n);
            let want = sharpe_two_pass(&x[a..b], 252.0).unwrap();
            let got = table.segment_metric(a, b, MetricKind::Sharpe).unwrap();
            assert!(
                (got - want).abs() <= 1e-10 * want.abs().max(1.0),
                "{got} {want}"
            );
        }
    }
}

#[test]
fn sortino_matches_direct() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for case in 0..100 {
        let x = gaussian(100 + case, 120, 0.0005, 0.01);
        let mar = [0.0, 0.0002, -0.001][case as usize % 3];
        let kind = MetricKind::Sortino { mar };
        let table = PrefixTable::for_metric(&series(x.clone()), kind).unwrap();
        let a = rng.random_range(0..100);
        let b = rng.random_range(a + 5..=120);
        let want = sortino_direct(&x[a..b], mar, 252.0).unwrap();
        let got = table.segment_metric(a, b, kind).unwrap();
        assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0));
    }
}

#[test]
fn drawdown_matches_all_pairs() {
    for case in 0..200 {
        let x = gaussian(case, 2 + case as usize % 80, 0.0, 0.03);
        let got = max_drawdown(&series(x.clone())).unwrap();
        assert!((got - drawdown_all_pairs(&x)).abs() <= 1e-12);
    }
}

#[test]
fn rolling_vol_matches_direct() {
    for case in 0..50 {
        let x = gaussian(case, 60 + case as usize, 0.0003, 0.01);
        let window = 5 + case as usize % 20;
        let got = rolling_sharpe_volatility(&series(x.clone()), window).unwrap();
        let want = rolling_vol_direct(&x, window, 252.0);
        assert!((got.value - want).abs() <= 1e-10 * want.max(1.0));
    }
}

#[test]
fn fast_matches_recursive_oracle() {
    let sharpe = |w: &[f64]| sharpe_two_pass(w, 252.0);
    let sortino = |w: &[f64]| sortino_direct(w, 0.0, 252.0);
    for case in 0..40u64 {
        let n = 12 + case as usize % 20;
        let x = gaussian(500 + case, n, 0.0002, 0.01);
        let xs = series(x.clone());
        for s in 1..=3 {
            for d in 2..=4 {
                if n < (s + 1) * d {
                    continue;
                }
                let want = mrp_recursive(&x, s, d, &sharpe).unwrap();
                let got = mrp_fast(&xs, s, d, MetricKind::Sharpe).unwrap().value;
                assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0));
                // short segments with no shortfall leave Sortino undefined
                let want = mrp_recursive(&x, s, d, &sortino);
                match (want, mrp_fast(&xs, s, d, MetricKind::Sortino { mar: 0.0 })) {
                    (Some(w), Ok(g)) => assert!((g.value - w).abs() <= 1e-10 * w.abs().max(1.0)),
                    (None, Err(MrpError::NoValidPartition)) => {}
                    (w, g) => panic!("oracle {w:?} vs fast {g:?}"),
                }
            }
        }
    }
}

#[test]
fn fast_skips_flat_segments_like_the_oracle() {
    let sharpe = |w: &[f64]| sharpe_two_pass(w, 252.0);
    for case in 0..40u64 {
        let mut x = gaussian(900 + case, 24, 0.0, 0.01);
        // flat stretches make some partitions undefined
        let start = case as usize % 14;
        for v in &mut x[start..start + 8] {
            *v = 0.001;
        }
        for (s, d) in [(1, 3), (2, 3), (3, 2)] {
            let want = mrp_recursive(&x, s, d, &sharpe);
            let got = mrp_fast(&series(x.clone()), s, d, MetricKind::Sharpe);
            match (want, got) {
                (Some(w), Ok(g)) => assert!((g.value - w).abs() <= 1e-10 * w.abs().max(1.0)),
                (None, Err(MrpError::NoValidPartition)) => {}
                (w, g) => panic!("oracle {w:?} vs fast {g:?}"),
            }
        }
    }
}

#[test]
fn partition_count_matches_recursion() {
    fn count(n: usize, s: usize, d: usize) -> u128 {
        if s == 0 {
            return u128::from(n >= d);
        }
        (d..=n).map(|t| count(n - t, s - 1, d)).sum()
    }
    for n in 0..=40 {
        for s in 1..=3 {
            for d in 1..=5 {
                assert_eq!(
                    count_valid_partitions(n, s, d),
                    count(n, s, d),
                    "{n} {s} {d}"
                );
            }
        }
    }
}

#[test]
fn correlations_match_covariance_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let k = rng.random_range(3..15);
        let mut col = || (0..k).map(|_| rng.random::<f64>()).collect::<Vec<f64>>();
        let v = RobustnessVectors {
            labels: (0..k).map(|i| i.to_string()).collect(),
            mrp: col(),
            sharpe: col(),
            rolling_sharpe_vol: col(),
            max_drawdown: col(),
        };
        let m = robustness_correlations(&v).unwrap();
        let cols = [&v.mrp, &v.sharpe, &v.rolling_sharpe_vol, &v.max_drawdown];
        for i in 0..4 {
            for j in 0..4 {
                let (a, b) = (cols[i], cols[j]);
                let n = k as f64;
                let ma = a.iter().sum::<f64>() / n;
                let mb = b.iter().sum::<f64>() / n;
                let cov: f64 =
                    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum::<f64>() / n - ma * mb;
                let va = a.iter().map(|x| x * x).sum::<f64>() / n - ma * ma;
                let vb = b.iter().map(|x| x * x).sum::<f64>() / n - mb * mb;
                let want = cov / (va * vb).sqrt();
                assert!((m.values[i][j] - want).abs() < 1e-12);
                assert_eq!(m.values[i][j], m.values[j][i]);
            }
        }
        assert!((pearson(&v.mrp, &v.mrp).unwrap() - 1.0).abs() < 1e-15);
    }
}

#[test]
fn grid_cells_match_recomputation() {
    let x = series(gaussian(42, 400, 0.0004, 0.01));
    let lookbacks = [Span::Periods(100), Span::Periods(250), Span::Periods(400)];
    let ds = [Span::Periods(20), Span::Periods(40), Span::Periods(60)];
    for s in 1..=2 {
        let grid = sensitivity_grid(&x, &lookbacks, &ds, s, MetricKind::Sharpe).unwrap();
        for (i, l) in lookbacks.iter().enumerate() {
            for (k, d) in ds.iter().enumerate() {
                let (l, d) = (l.periods(Frequency::Daily), d.periods(Frequency::Daily));
                let w = &x.returns()[x.len() - l..];
                let cell = grid.cells[i][k];
                if l < (s + 1) * d {
                    assert_eq!(cell, GridCell::Infeasible);
                    continue;
                }
                let want = mrp_recursive(w, s, d, &|v| sharpe_two_pass(v, 252.0)).unwrap()
                    - sharpe_two_pass(w, 252.0).unwrap();
                assert!((cell.value().unwrap() - want).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn portfolio_equals_brute_force_on_aggregate() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for case in 0..20u64 {
        let strategies: Vec<ReturnSeries> = (0..3)
            .map(|k| series(gaussian(case * 10 + k, 30, 0.0003, 0.01)).with_label(format!("s{k}")))
            .collect();
        let weights: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let aggregate: Vec<f64> = (0..30)
            .map(|t| {
                (0..3)
                    .map(|k| weights[k] * strategies[k].returns()[t])
                    .sum()
            })
            .collect();
        let spec = PortfolioSpec {
            weights,
            strategies,
        };
        let got = mrp_core::analytics::portfolio_mrp(&spec, 2, 4, MetricKind::Sharpe).unwrap();
        let want = mrp_brute_force(&series(aggregate), 2, 4, MetricKind::Sharpe).unwrap();
        assert!((got.value - want.value).abs() < 1e-12);
    }
}

#[test]
fn portfolio_trivial_weights() {
    let a = series(gaussian(1, 40, 0.0003, 0.01));
    let single = mrp_fast(&a, 1, 5, MetricKind::Sharpe).unwrap();
    let one = PortfolioSpec {
        weights: vec![1.0],
        strategies: vec![a.clone()],
    };
    let got = mrp_core::analytics::portfolio_mrp(&one, 1, 5, MetricKind::Sharpe).unwrap();
    assert_eq!(got.value, single.value);
    assert_eq!(got.optimal_splits, single.optimal_splits);
    let two = PortfolioSpec {
        weights: vec![0.5, 0.5],
        strategies: vec![a.clone(), a.clone().with_label("copy")],
    };
    let got = mrp_core::analytics::portfolio_mrp(&two, 1, 5, MetricKind::Sharpe).unwrap();
    assert_eq!(got.value, single.value);
    assert_eq!(got.optimal_splits, single.optimal_splits);
}

#[test]
fn quadrature_matches_monte_carlo() {
    for n in [1u64, 2, 5, 10, 100] {
        let model = BiasModel::flat(0.1, 0.7, n).unwrap();
        let exact = expected_min_exact(&model).unwrap();
        let mc = summarize(&simulate_min_model(&model, 200_000, n));
        assert!(
            (mc.mean - exact).abs() < 3.0 * mc.se,
            "N={n}: {} vs {exact}",
            mc.mean
        );
    }
    let two = BiasModel::flat(0.0, 2.0, 2).unwrap();
    let analytic = -2.0 / std::f64::consts::PI.sqrt();
    assert!((expected_min_exact(&two).unwrap() / analytic - 1.0).abs() < 1e-9);
}

#[test]
fn asymptotic_matches_closed_form() {
    for n in [10u64, 1000, 1_000_000] {
        let l = (n as f64).ln();
        let b = (2.0 * l).sqrt()
            - (l.ln() + (4.0 * std::f64::consts::PI).ln()) / (2.0 * (2.0 * l).sqrt());
        let model = BiasModel::flat(0.0, 1.5, n).unwrap();
        assert!((bias_asymptotic(&model).unwrap() - 1.5 * b).abs() < 1e-12);
        let c = gumbel_constants(n as f64).unwrap();
        assert!((c.a * c.b - 1.0).abs() < 1e-12);
    }
}

#[test]
fn bootstrap_mean_tracks_fresh_series() {
    let (n, d, originals, reps) = (200, 20, 60, 100);
    let mut boot_means = Vec::new();
    for seed in 0..originals {
        let x = series(gaussian(7000 + seed, n, 0.0, 0.01));
        let b = block_bootstrap_mrp(&x, 1, reps, 1, d, MetricKind::Sharpe, seed).unwrap();
        boot_means.push(b.mean);
    }
    let fresh: Vec<f64> = (0..600)
        .map(|seed| {
            mrp_fast(
                &series(gaussian(90_000 + seed, n, 0.0, 0.01)),
                1,
                d,
                MetricKind::Sharpe,
            )
            .unwrap()
            .value
        })
        .collect();
    let boot = summarize(&boot_means);
    let fresh = summarize(&fresh);
    let se = (boot.se.powi(2) + fresh.se.powi(2)).sqrt();
    assert!(
        (boot.mean - fresh.mean).abs() < 3.0 * se,
        "{boot:?} {fresh:?}"
    );
}

#[test]
fn original_inside_bootstrap_envelope() {
    let inside = (0..50u64)
        .filter(|&seed| {
            let x = series(gaussian(300 + seed, 300, 0.0003, 0.01));
            let b = block_bootstrap_mrp(&x, 30, 100, 1, 30, MetricKind::Sharpe, seed).unwrap();
            b.min <= b.original && b.original <= b.max
        })
        .count();
    assert!(inside >= 45, "{inside}/50");
}

#[test]
fn stationary_mrp_below_sharpe() {
    let below = (0..500u64)
        .filter(|&seed| {
            let x = series(gaussian(seed, 504, 0.0004, 0.01));
            let r = mrp_core::analytics::factor_report(
                &x,
                Span::Periods(504),
                Span::Periods(126),
                MetricKind::Sharpe,
            )
            .unwrap();
            r.mrp1 < r.full_sharpe
        })
        .count();
    assert!(below >= 475, "{below}/500");
}

#[test]
fn thirteen_column_file_loads_thirteen_series() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("wide.csv");
    let cols: Vec<ReturnSeries> = (0..13)
        .map(|k| series(gaussian(k, 250, 0.0, 0.01)).with_label(format!("f{k}")))
        .collect();
    write_wide_csv_file(&path, &cols).unwrap();
    let rows = std::fs::read_to_string(&path).unwrap().lines().count() - 1;
    let loaded = load_csv(&IngestConfig::new(&path)).unwrap();
    assert_eq!(loaded.len(), 13);
    assert!(loaded.iter().all(|s| s.len() == rows));
}
