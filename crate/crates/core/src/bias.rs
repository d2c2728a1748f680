//! Bias of MRP under an idealised model.
//!
//! Segment metrics are modelled as i.i.d. `N(mu, sigma^2)` draws, `s` per
//! partition and `n_s` partitions. MRP is then the minimum of `N = s * n_s`
//! normals, whose expectation is
//!
//! ```text
//! E[Z] = mu + sigma * N * integral z phi(z) (1 - Phi(z))^(N - 1) dz
//! ```
//!
//! and the bias is `mu - E[Z] >= 0`. For large `N` the minimum sits near
//! `-b` with `b` the Gumbel location of the normal maximum, giving the
//! closed-form asymptotic bias `sigma * b`.

use std::f64::consts::{PI, SQRT_2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::erf::{erfc, erfc_inv};
use thiserror::Error;

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BiasError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("quadrature did not converge on [{lo}, {hi}]")]
    QuadratureFailed { lo: f64, hi: f64 },
}

/// i.i.d. normal model of the `s * n_s` segment metrics behind one MRP value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiasModel {
    pub mu: f64,
    pub sigma: f64,
    pub s: u64,
    pub n_s: u64,
}

impl BiasModel {
    pub fn new(mu: f64, sigma: f64, s: u64, n_s: u64) -> Result<Self, BiasError> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(BiasError::InvalidModel(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        if !mu.is_finite() {
            return Err(BiasError::InvalidModel(format!(
                "mu must be finite, got {mu}"
            )));
        }
        if s == 0 || n_s == 0 {
            return Err(BiasError::InvalidModel(format!(
                "need s >= 1 and n_s >= 1, got s = {s}, n_s = {n_s}"
            )));
        }
        if s.checked_mul(n_s).is_none() {
            return Err(BiasError::InvalidModel("s * n_s overflows".into()));
        }
        Ok(Self { mu, sigma, s, n_s })
    }

    /// One group of `count` draws (`s = 1`, `n_s = count`).
    pub fn flat(mu: f64, sigma: f64, count: u64) -> Result<Self, BiasError> {
        Self::new(mu, sigma, 1, count)
    }

    /// Model for a length-`n` series with `s` splits of minimum length `d`.
    pub fn for_series(
        mu: f64,
        sigma: f64,
        n: usize,
        s: usize,
        d: usize,
    ) -> Result<Self, BiasError> {
        let n_s = crate::mrp::count_valid_partitions(n, s, d);
        let n_s = u64::try_from(n_s)
            .map_err(|_| BiasError::InvalidModel("partition count exceeds u64".into()))?;
        Self::new(mu, sigma, s as u64, n_s)
    }

    /// Effective number of order statistics, `s * n_s`.
    pub fn count(&self) -> u64 {
        self.s * self.n_s
    }
}

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// ln Phi(z), accurate in both tails.
pub fn normal_log_cdf(z: f64) -> f64 {
    normal_log_sf(-z)
}

/// ln (1 - Phi(z)), accurate in both tails.
pub fn normal_log_sf(z: f64) -> f64 {
    if z < 0.0 {
        // near 1: work with the small complement
        (-0.5 * erfc(-z / SQRT_2)).ln_1p()
    } else if z < 30.0 {
        (0.5 * erfc(z / SQRT_2)).ln()
    } else {
        // Mills-ratio series; erfc underflows past z ~ 37
        let z2 = z * z;
        -0.5 * z2 - z.ln() - 0.5 * (2.0 * PI).ln() + (1.0 - 1.0 / z2 + 3.0 / (z2 * z2)).ln()
    }
}

/// Phi^-1(p).
pub fn normal_quantile(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// Gumbel location and scale for the maximum of `N` standard normals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GumbelConstants {
    /// Location, in standard-normal units.
    pub b: f64,
    /// Scale, `1 / b`.
    pub a: f64,
    pub gamma: f64,
}

impl GumbelConstants {
    /// `a * gamma`: the Gumbel mean offset, left out of the asymptotic bias.
    pub fn mean_offset(&self) -> f64 {
        self.a * self.gamma
    }
}

/// `b` solves `1 - Phi(b) = 1 / N` under the Mills-ratio tail
/// approximation, to first order in the `ln ln N` correction:
/// `b = sqrt(2 ln N) - (ln ln N + ln 4 pi) / (2 sqrt(2 ln N))`.
/// For `N = 2` the correction is not meaningful and the leading term is used.
pub fn gumbel_constants(count: f64) -> Result<GumbelConstants, BiasError> {
    if count.is_nan() || count < 2.0 {
        return Err(BiasError::InvalidModel(format!(
            "Gumbel constants need N >= 2, got {count}"
        )));
    }
    let ln_n = count.ln();
    let root = (2.0 * ln_n).sqrt();
    let b = if count < 3.0 {
        root
    } else {
        root - (ln_n.ln() + (4.0 * PI).ln()) / (2.0 * root)
    };
    Ok(GumbelConstants {
        b,
        a: 1.0 / b,
        gamma: EULER_GAMMA,
    })
}

// 15-point Gauss-Kronrod nodes on [0, 1] with the embedded 7-point Gauss rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> (f64, f64) {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for k in 0..7 {
        let dx = half * XGK[k];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[k] * pair;
        if k % 2 == 1 {
            gauss += WG[k / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive Gauss-Kronrod with a global absolute tolerance.
fn integrate<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Result<f64, BiasError> {
    const MAX_INTERVALS: usize = 4000;
    let (v, e) = gauss_kronrod(&f, lo, hi);
    let mut intervals = vec![(lo, hi, v, e)];
    loop {
        let total_err: f64 = intervals.iter().map(|iv| iv.3).sum();
        if total_err <= tol {
            return Ok(intervals.iter().map(|iv| iv.2).sum());
        }
        if intervals.len() >= MAX_INTERVALS {
            return Err(BiasError::QuadratureFailed { lo, hi });
        }
        let (worst, _) = intervals
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .3.total_cmp(&b.1 .3))
            .expect("non-empty");
        let (a, b, _, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (a + b);
        let (v1, e1) = gauss_kronrod(&f, a, mid);
        let (v2, e2) = gauss_kronrod(&f, mid, b);
        intervals.push((a, mid, v1, e1));
        intervals.push((mid, b, v2, e2));
    }
}

/// `E[max of N standard normals]` by quadrature.
///
/// The integrand `N z phi(z) Phi(z)^(N-1)` is evaluated as
/// `z * exp(ln N + ln phi(z) + (N-1) ln Phi(z))`; the power term underflows
/// in linear space long before it becomes negligible for large `N`.
fn expected_max_standard(count: u64) -> Result<f64, BiasError> {
    if count == 0 {
        return Err(BiasError::InvalidModel("N must be at least 1".into()));
    }
    if count == 1 {
        return Ok(0.0);
    }
    let n = count as f64;
    let b = gumbel_constants(n)?.b;
    let bound = b + 12.0 / b + 2.0;
    let ln_n = n.ln();
    let log_norm = -0.5 * (2.0 * PI).ln();
    let integrand = |z: f64| {
        let log_density = ln_n + log_norm - 0.5 * z * z + (n - 1.0) * normal_log_cdf(z);
        z * log_density.exp()
    };
    // split at the mode region so the adaptive rule starts on the right scale
    let lo = -bound;
    let hi = bound;
    let a = integrate(integrand, lo, 0.0, 1e-11)?;
    let c = integrate(integrand, 0.0, hi, 1e-11)?;
    Ok(a + c)
}

/// `E[Z]`, the expected MRP under the model.
pub fn expected_min_exact(model: &BiasModel) -> Result<f64, BiasError> {
    Ok(model.mu - model.sigma * expected_max_standard(model.count())?)
}

/// `E[X] - E[Z]`: how far MRP sits below the true metric on average.
pub fn bias_exact(model: &BiasModel) -> Result<f64, BiasError> {
    Ok(model.sigma * expected_max_standard(model.count())?)
}

/// Asymptotic bias `sigma * b`, with `b` from [`gumbel_constants`]. Equivalent to
/// `sigma * (4 ln N - ln ln N - ln 4 pi) / (2 sqrt(2 ln N))`, reported as a
/// positive magnitude. The Gumbel mean offset `a * gamma` is not included.
pub fn bias_asymptotic(model: &BiasModel) -> Result<f64, BiasError> {
    let count = model.count();
    if count < 3 {
        return Err(BiasError::InvalidModel(format!(
            "asymptotic bias needs N >= 3, got {count}"
        )));
    }
    Ok(model.sigma * gumbel_constants(count as f64)?.b)
}

/// `mu - bias_asymptotic`.
pub fn expected_min_asymptotic(model: &BiasModel) -> Result<f64, BiasError> {
    Ok(model.mu - bias_asymptotic(model)?)
}

const TRIALS_PER_STREAM: usize = 1024;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Runs `draw` once per trial; trial blocks own independent ChaCha streams,
/// so the output is the same for any worker count.
fn simulate_standard<F>(trials: usize, seed: u64, draw: F) -> Vec<f64>
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync + Send,
{
    let blocks = trials.div_ceil(TRIALS_PER_STREAM);
    let draw = &draw;
    (0..blocks)
        .into_par_iter()
        .flat_map_iter(|block| {
            let mut rng = stream_rng(seed, block as u64);
            let len = TRIALS_PER_STREAM.min(trials - block * TRIALS_PER_STREAM);
            (0..len).map(move |_| draw(&mut rng)).collect::<Vec<_>>()
        })
        .collect()
}

/// Draws of standardised `Z' = min over n_s groups of min over s normals`,
/// generated literally.
pub fn simulate_min_standard(model: &BiasModel, trials: usize, seed: u64) -> Vec<f64> {
    let (s, n_s) = (model.s, model.n_s);
    simulate_standard(trials, seed, move |rng| {
        let mut z = f64::INFINITY;
        for _ in 0..n_s {
            let mut group = f64::INFINITY;
            for _ in 0..s {
                group = group.min(rng.sample::<f64, _>(StandardNormal));
            }
            z = z.min(group);
        }
        z
    })
}

/// Draws of `Z = mu + sigma Z'`.
pub fn simulate_min_model(model: &BiasModel, trials: usize, seed: u64) -> Vec<f64> {
    simulate_min_standard(model, trials, seed)
        .into_iter()
        .map(|z| model.mu + model.sigma * z)
        .collect()
}

/// Draws of `Z'` by inverting its distribution `1 - (1 - Phi(x))^N`:
/// `Z' = Phi^-1(1 - V^(1/N))` for uniform `V`. Constant cost per draw
/// regardless of `N`.
pub fn sample_min_standard_inverse(count: u64, trials: usize, seed: u64) -> Vec<f64> {
    let n = count as f64;
    simulate_standard(trials, seed, move |rng| {
        let v: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        let p = -(v.ln() / n).exp_m1();
        normal_quantile(p)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloSummary {
    pub trials: usize,
    pub mean: f64,
    /// Standard error of the mean.
    pub se: f64,
}

pub fn summarize(samples: &[f64]) -> MonteCarloSummary {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    MonteCarloSummary {
        trials: samples.len(),
        mean,
        se: (var / n).sqrt(),
    }
}

pub fn gumbel_cdf(x: f64) -> f64 {
    (-(-x).exp()).exp()
}

/// One-sample Kolmogorov-Smirnov distance.
pub fn ks_distance<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    /// Minimum of `s * n_s` explicit normal draws.
    Direct,
    /// Inverse-CDF draw of the minimum.
    InverseCdf,
}

impl Sampler {
    fn standard(self, model: &BiasModel, trials: usize, seed: u64) -> Vec<f64> {
        match self {
            Sampler::Direct => simulate_min_standard(model, trials, seed),
            Sampler::InverseCdf => sample_min_standard_inverse(model.count(), trials, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftRow {
    pub count: u64,
    pub simulated: MonteCarloSummary,
    pub exact_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GumbelDiagnostic {
    pub count: u64,
    pub constants: GumbelConstants,
    /// KS distance of `-(Z' + b) / a` to the standard Gumbel.
    pub ks_distance: f64,
    /// Simulated `E[Z]` at `N = 10, 100, ...` up to the model's `N`.
    pub drift: Vec<DriftRow>,
}

/// Checks the two limit statements for MRP: `(Z' + b) / a` approaches a
/// negated Gumbel, and `E[Z]` drifts to minus infinity as `N` grows.
pub fn gumbel_limit_diagnostic(
    model: &BiasModel,
    trials: usize,
    seed: u64,
    sampler: Sampler,
) -> Result<GumbelDiagnostic, BiasError> {
    let count = model.count();
    if count < 10 {
        return Err(BiasError::InvalidModel(format!(
            "Gumbel diagnostic needs N >= 10, got {count}"
        )));
    }
    let constants = gumbel_constants(count as f64)?;
    let standard = sampler.standard(model, trials, seed);
    let normalized: Vec<f64> = standard
        .iter()
        .map(|z| -(z + constants.b) / constants.a)
        .collect();
    let ks = ks_distance(&normalized, gumbel_cdf);

    let mut drift = Vec::new();
    let mut grid = 10u64;
    while grid <= count {
        let m = BiasModel::flat(model.mu, model.sigma, grid)?;
        let draws: Vec<f64> = sampler
            .standard(&m, trials, seed.wrapping_add(grid))
            .into_iter()
            .map(|z| model.mu + model.sigma * z)
            .collect();
        drift.push(DriftRow {
            count: grid,
            simulated: summarize(&draws),
            exact_mean: expected_min_exact(&m)?,
        });
        match grid.checked_mul(10) {
            Some(next) => grid = next,
            None => break,
        }
    }
    Ok(GumbelDiagnostic {
        count,
        constants,
        ks_distance: ks,
        drift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_draw_has_no_bias() {
        let m = BiasModel::flat(0.0, 1.0, 1).unwrap();
        assert_eq!(expected_min_exact(&m).unwrap(), 0.0);
        assert_eq!(bias_exact(&m).unwrap(), 0.0);
    }

    #[test]
    fn min_of_two_normals() {
        let m = BiasModel::flat(0.0, 1.0, 2).unwrap();
        let expected = -1.0 / PI.sqrt();
        let got = expected_min_exact(&m).unwrap();
        assert!((got - expected).abs() < 1e-10, "{got}");
        assert!((bias_exact(&m).unwrap() + expected).abs() < 1e-10);
    }

    #[test]
    fn bias_linear_in_sigma() {
        for n in [1, 2, 7, 50, 1000] {
            let one = bias_exact(&BiasModel::flat(0.3, 1.0, n).unwrap()).unwrap();
            let two = bias_exact(&BiasModel::flat(0.3, 2.0, n).unwrap()).unwrap();
            assert!((two - 2.0 * one).abs() < 1e-12);
        }
    }

    #[test]
    fn location_scale() {
        for n in [1, 3, 10, 250, 100_000] {
            let standard = expected_min_exact(&BiasModel::flat(0.0, 1.0, n).unwrap()).unwrap();
            let shifted = expected_min_exact(&BiasModel::flat(0.5, 2.0, n).unwrap()).unwrap();
            assert!((shifted - (0.5 + 2.0 * standard)).abs() < 1e-10);
        }
    }

    #[test]
    fn bias_increases_with_n() {
        let mut prev = -1.0;
        for n in 1..=100 {
            let b = bias_exact(&BiasModel::flat(0.0, 1.0, n).unwrap()).unwrap();
            assert!(b >= 0.0 && b > prev, "N = {n}");
            prev = b;
        }
    }

    #[test]
    fn gumbel_constants_at_one_million() {
        let g = gumbel_constants(1e6).unwrap();
        assert!((g.b - 4.766).abs() < 5e-4, "{}", g.b);
        assert!((g.a - 0.2098).abs() < 5e-5, "{}", g.a);
        assert!((g.a * g.b - 1.0).abs() < 1e-15);
        assert!((g.mean_offset() - g.a * EULER_GAMMA).abs() < 1e-15);
    }

    #[test]
    fn gumbel_constants_domain() {
        assert!(gumbel_constants(1.0).is_err());
        let two = gumbel_constants(2.0).unwrap();
        assert!((two.b - (2.0 * 2f64.ln()).sqrt()).abs() < 1e-15);
        let mut prev = gumbel_constants(8.0).unwrap().b;
        for n in 9..2000 {
            let b = gumbel_constants(n as f64).unwrap().b;
            assert!(b > prev);
            prev = b;
        }
    }

    #[test]
    fn mills_ratio_consistency() {
        for n in [1e3, 1e4, 1e5, 1e6, 1e8] {
            let b = gumbel_constants(n).unwrap().b;
            let implied = n * normal_pdf(b) / b;
            assert!((0.8..=1.25).contains(&implied), "N = {n}: {implied}");
        }
    }

    #[test]
    fn asymptotic_matches_closed_form() {
        let m = BiasModel::new(0.0, 1.5, 2, 5000).unwrap();
        let n = 10_000f64;
        let ln_n = n.ln();
        let closed = 1.5 * (4.0 * ln_n - ln_n.ln() - (4.0 * PI).ln()) / (2.0 * (2.0 * ln_n).sqrt());
        assert!((bias_asymptotic(&m).unwrap() - closed).abs() < 1e-12);
        assert!(bias_asymptotic(&BiasModel::flat(0.0, 1.0, 2).unwrap()).is_err());
    }

    #[test]
    fn invalid_models() {
        assert!(BiasModel::new(0.0, 0.0, 1, 1).is_err());
        assert!(BiasModel::new(0.0, 1.0, 0, 1).is_err());
        assert!(BiasModel::new(0.0, 1.0, 1, 0).is_err());
        assert_eq!(BiasModel::for_series(0.0, 1.0, 10, 1, 2).unwrap().n_s, 7);
        assert!(BiasModel::for_series(0.0, 1.0, 5, 2, 2).is_err());
    }

    #[test]
    fn log_tails() {
        assert!((normal_log_sf(0.0) - 0.5f64.ln()).abs() < 1e-15);
        // continuity across the asymptotic switch
        let below = normal_log_sf(30.0 - 1e-9);
        let above = normal_log_sf(30.0);
        assert!((below - above).abs() < 1e-6);
        assert!(normal_log_cdf(-40.0).is_finite());
        assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-9);
        // upper tail of the cdf keeps the small complement t = Phi(-6)
        let t = 0.5 * erfc(6.0 / SQRT_2);
        assert!((normal_log_cdf(6.0) / (-t - 0.5 * t * t) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quadrature_holds_at_large_n() {
        let mut prev = 0.0;
        for n in [1e4, 1e5, 1e6, 1e7] {
            let m = BiasModel::flat(0.0, 1.0, n as u64).unwrap();
            let e = expected_min_exact(&m).unwrap();
            assert!(e < prev, "N = {n}");
            prev = e;
        }
    }

    #[test]
    fn simulation_is_reproducible_and_location_equivariant() {
        let m = BiasModel::new(0.0, 1.0, 2, 5).unwrap();
        let a = simulate_min_model(&m, 3000, 11);
        let b = simulate_min_model(&m, 3000, 11);
        assert_eq!(a, b);
        let shifted = simulate_min_model(&BiasModel::new(0.75, 1.0, 2, 5).unwrap(), 3000, 11);
        for (x, y) in a.iter().zip(&shifted) {
            assert!((y - x - 0.75).abs() < 1e-12);
        }
    }

    #[test]
    fn worker_count_does_not_change_draws() {
        let m = BiasModel::flat(0.0, 1.0, 7).unwrap();
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let many = rayon::ThreadPoolBuilder::new()
            .num_threads(6)
            .build()
            .unwrap();
        let a = one.install(|| simulate_min_model(&m, 5000, 3));
        let b = many.install(|| simulate_min_model(&m, 5000, 3));
        assert_eq!(a, b);
    }

    #[test]
    fn ks_distance_of_exact_quantiles_is_small() {
        let samples: Vec<f64> = (0..1000)
            .map(|i| -(-((i as f64 + 0.5) / 1000.0).ln()).ln())
            .collect();
        assert!(ks_distance(&samples, gumbel_cdf) <= 0.5 / 1000.0 + 1e-12);
    }
}
