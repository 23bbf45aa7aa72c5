use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::Moments;

/// Smallest effective sample size for which a verdict is issued.
pub const MIN_EFFECTIVE_SAMPLES: f64 = 30.0;

/// Autocorrelation level whose first crossing sets the summation window.
const CROSSING_LEVEL: f64 = 0.05;
const WINDOW_FACTOR: usize = 5;

/// Autocovariances `c_k = (1/N) Σ_{t<N-k} (y_t - ȳ)(y_{t+k} - ȳ)` for
/// `k = 0..=max_lag`, via zero-padded FFT.
pub fn autocovariance(series: &[f64], max_lag: usize) -> Vec<f64> {
    let n = series.len();
    if n == 0 {
        return Vec::new();
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = series
        .iter()
        .map(|&y| Complex::new(y - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for z in &mut buf {
        *z = Complex::new(z.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    let scale = 1.0 / (size as f64 * n as f64);
    buf.iter().take(max_lag.min(n - 1) + 1).map(|z| z.re * scale).collect()
}

/// Integrated autocorrelation time `τ = 1 + 2 Σ_{k=1}^{W} ρ_k`, with the
/// window `W` five times the first lag where `ρ_k < 0.05`. Returns `None`
/// when the autocorrelation never drops below that level within a fifth of
/// the series. Clamped below at 1.
pub fn integrated_autocorr_time(series: &[f64]) -> Option<f64> {
    let n = series.len();
    if n < 4 {
        return None;
    }
    let max_lag = n / 5;
    let c = autocovariance(series, max_lag);
    if c[0] <= 0.0 {
        return Some(1.0);
    }
    let cross = (1..c.len()).find(|&k| c[k] / c[0] < CROSSING_LEVEL)?;
    let window = (WINDOW_FACTOR * cross).min(c.len() - 1);
    let tau = 1.0 + 2.0 * c[1..=window].iter().map(|ck| ck / c[0]).sum::<f64>();
    Some(tau.max(1.0))
}

/// Mean of a dependent series with its autocorrelation-adjusted standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesMean {
    pub mean: f64,
    pub std_error: f64,
    pub tau: f64,
    pub effective_samples: f64,
}

/// Sample mean and `sd · sqrt(τ/N)`. A series whose autocorrelation never
/// decays is reported with zero effective samples.
pub fn series_mean(series: &[f64]) -> SeriesMean {
    let m: Moments = series.iter().copied().collect();
    let n = series.len() as f64;
    match integrated_autocorr_time(series) {
        Some(tau) => SeriesMean {
            mean: m.mean(),
            std_error: (m.central2() * tau / n).sqrt(),
            tau,
            effective_samples: n / tau,
        },
        None => SeriesMean {
            mean: m.mean(),
            std_error: f64::INFINITY,
            tau: f64::INFINITY,
            effective_samples: 0.0,
        },
    }
}

/// Normalised autocorrelations of one observable at a set of time lags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutocorrEstimate {
    pub observable: String,
    pub lags: Vec<f64>,
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
}

/// Batched autocorrelation estimate of a stationary series sampled every
/// `sample_dt`. Values are lag products around the global mean normalised by
/// the global variance; standard errors come from the spread of the same
/// quantity over `batches` contiguous batches.
pub fn autocorrelation_series(
    observable: &str,
    series: &[f64],
    sample_dt: f64,
    lags: &[f64],
    batches: usize,
) -> Result<AutocorrEstimate> {
    let n = series.len();
    if lags.windows(2).any(|w| w[1] <= w[0]) || lags.first().is_some_and(|&l| l < 0.0) {
        return Err(Error::Precondition(
            "lags must be nonnegative and strictly increasing".into(),
        ));
    }
    if batches < 2 {
        return Err(Error::Precondition("need at least 2 batches".into()));
    }
    let horizon = n as f64 * sample_dt;
    let steps: Vec<usize> = lags
        .iter()
        .map(|&l| {
            if l > horizon / 10.0 {
                return Err(Error::Precondition(format!(
                    "lag {l} exceeds a tenth of the horizon {horizon}"
                )));
            }
            let k = (l / sample_dt).round();
            if (k * sample_dt - l).abs() > 1e-9 * l.max(sample_dt) {
                return Err(Error::Precondition(format!(
                    "lag {l} is not a multiple of the sampling interval {sample_dt}"
                )));
            }
            Ok(k as usize)
        })
        .collect::<Result<_>>()?;

    let stats = series_mean(series);
    if stats.effective_samples < MIN_EFFECTIVE_SAMPLES {
        return Err(Error::InsufficientData {
            ess: stats.effective_samples,
            required: MIN_EFFECTIVE_SAMPLES,
        });
    }
    let mean = stats.mean;
    let c0 = series.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n as f64;
    let len = n / batches;
    let mut values = Vec::with_capacity(lags.len());
    let mut std_errors = Vec::with_capacity(lags.len());
    for &k in &steps {
        let product = |t: usize| (series[t] - mean) * (series[t + k] - mean);
        let total = (0..n - k).map(product).sum::<f64>() / (n - k) as f64;
        values.push(total / c0);
        let per_batch: Moments = (0..batches)
            .filter_map(|b| {
                let start = b * len;
                let end = ((b + 1) * len).min(n - k);
                (end > start).then(|| (start..end).map(product).sum::<f64>() / ((end - start) as f64 * c0))
            })
            .collect();
        std_errors.push(per_batch.std_error());
    }
    Ok(AutocorrEstimate {
        observable: observable.to_string(),
        lags: lags.to_vec(),
        values,
        std_errors,
    })
}

/// Least-squares decay rate of `log ρ(τ)` over the lags where `ρ` exceeds
/// two standard errors. Descriptive only.
pub fn fitted_decay_rate(est: &AutocorrEstimate) -> Option<f64> {
    let pts: Vec<(f64, f64)> = est
        .lags
        .iter()
        .zip(est.values.iter().zip(&est.std_errors))
        .filter(|(_, (v, se))| **v > 2.0 * **se && **v > 0.0)
        .map(|(&l, (&v, _))| (l, v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| -sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn ar1(phi: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut y = 0.0;
        let s = (1.0 - phi * phi).sqrt();
        (0..n)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                y = phi * y + s * e;
                y
            })
            .collect()
    }

    #[test]
    fn fft_matches_direct_sum() {
        let y = ar1(0.7, 500, 1);
        let c = autocovariance(&y, 20);
        let mean = y.iter().sum::<f64>() / 500.0;
        for (k, ck) in c.iter().enumerate() {
            let direct: f64 = (0..500 - k).map(|t| (y[t] - mean) * (y[t + k] - mean)).sum::<f64>() / 500.0;
            assert!((ck - direct).abs() < 1e-12, "lag {k}");
        }
    }

    #[test]
    fn ar1_tau() {
        // τ = (1 + φ)/(1 - φ) = 9 for φ = 0.8
        let y = ar1(0.8, 400_000, 2);
        let tau = integrated_autocorr_time(&y).unwrap();
        assert!((tau - 9.0).abs() < 0.6, "tau = {tau}");
        let iid = ar1(0.0, 100_000, 3);
        assert!(integrated_autocorr_time(&iid).unwrap() < 1.1);
    }

    #[test]
    fn lag_zero_is_one_and_ar1_matches() {
        let y = ar1(0.9, 200_000, 4);
        let est = autocorrelation_series("y", &y, 0.5, &[0.0, 0.5, 2.5, 5.0], 20).unwrap();
        assert!((est.values[0] - 1.0).abs() <= 1e-12);
        for (i, &k) in [0, 1, 5, 10].iter().enumerate() {
            let expect = 0.9f64.powi(k);
            assert!(
                (est.values[i] - expect).abs() <= 4.0 * est.std_errors[i] + 1e-12,
                "lag {k}: {est:?}"
            );
        }
        let rate = fitted_decay_rate(&est).unwrap();
        assert!((rate - (-(0.9f64).ln() / 0.5)).abs() < 0.03, "rate {rate}");
    }

    #[test]
    fn autocorrelation_preconditions() {
        let y = ar1(0.5, 1000, 5);
        assert!(autocorrelation_series("y", &y, 1.0, &[200.0], 10).is_err());
        assert!(autocorrelation_series("y", &y, 1.0, &[2.0, 1.0], 10).is_err());
        assert!(autocorrelation_series("y", &y, 1.0, &[1.5], 10).is_err());
        let frozen: Vec<f64> = (0..1000).map(|t| (t as f64 * 1e-3).sin()).collect();
        assert!(matches!(
            autocorrelation_series("slow", &frozen, 1.0, &[1.0], 10),
            Err(Error::InsufficientData { .. })
        ));
    }
}
