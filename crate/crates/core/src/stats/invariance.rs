use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::MeasureParams;
use crate::space::ShellState;

use super::autocorr::{series_mean, MIN_EFFECTIVE_SAMPLES};
use super::{Moments, Verdict, Z_THRESHOLD};

/// Variance and excess-kurtosis z-scores of one component `x_{n,i}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentCheck {
    pub shell: usize,
    pub comp: usize,
    pub variance: f64,
    pub expected_variance: f64,
    pub variance_se: f64,
    pub z_variance: f64,
    pub excess_kurtosis: f64,
    pub kurtosis_se: f64,
    pub z_kurtosis: f64,
    /// Smaller of the effective sample sizes of the two statistics.
    pub effective_samples: f64,
}

impl ComponentCheck {
    pub fn max_abs_z(&self) -> f64 {
        self.z_variance.abs().max(self.z_kurtosis.abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub checks: Vec<ComponentCheck>,
    pub threshold: f64,
    pub max_abs_z: f64,
    pub verdict: Verdict,
}

/// Tests whether stationary data (one trajectory, or i.i.d. draws) have the
/// per-component variance `1/(ν λ_n^β)` and zero excess kurtosis, for shells
/// `1..=n_max` and both components.
///
/// Standard errors use the integrated autocorrelation time of each
/// statistic's influence series. The mean of a centred Gaussian is known, so
/// the variance statistic is the mean of `x²`. Excess kurtosis uses the
/// delta-method influence function
/// `ψ = (x_c⁴ - m4)/m2² - 2 m4 (x_c² - m2)/m2³` of the sample estimate.
/// Passes iff every `|z| ≤ 4`; fails with
/// [`Error::InsufficientData`] when some effective sample size is below 30.
pub fn invariance_test(states: &[ShellState], params: &MeasureParams, n_max: usize) -> Result<InvarianceReport> {
    let sp = params.spectral();
    if n_max == 0 || n_max > sp.shells() {
        return Err(Error::Precondition(format!(
            "n_max = {n_max} outside 1..={}",
            sp.shells()
        )));
    }
    if states.iter().any(|s| s.params() != sp) {
        return Err(Error::Precondition("state and measure spectra differ".into()));
    }
    let mut checks = Vec::with_capacity(2 * n_max);
    let mut min_ess = f64::INFINITY;
    for n in 1..=n_max {
        for comp in 1..=2 {
            let x: Vec<f64> = states.iter().map(|s| s.component(n, comp)).collect();
            let check = component_check(&x, n, comp, params.variance(n));
            min_ess = min_ess.min(check.effective_samples);
            checks.push(check);
        }
    }
    if min_ess < MIN_EFFECTIVE_SAMPLES {
        return Err(Error::InsufficientData {
            ess: min_ess,
            required: MIN_EFFECTIVE_SAMPLES,
        });
    }
    let max_abs_z = checks.iter().map(ComponentCheck::max_abs_z).fold(0.0, f64::max);
    Ok(InvarianceReport {
        checks,
        threshold: Z_THRESHOLD,
        max_abs_z,
        verdict: Verdict::from_pass(max_abs_z <= Z_THRESHOLD),
    })
}

fn component_check(x: &[f64], shell: usize, comp: usize, expected: f64) -> ComponentCheck {
    let squares: Vec<f64> = x.iter().map(|v| v * v).collect();
    let var = series_mean(&squares);

    let m: Moments = x.iter().copied().collect();
    let (mean, m2, m4) = (m.mean(), m.central2(), m.central4());
    let kurt = m4 / (m2 * m2) - 3.0;
    let influence: Vec<f64> = x
        .iter()
        .map(|v| {
            let c2 = (v - mean).powi(2);
            (c2 * c2 - m4) / (m2 * m2) - 2.0 * m4 * (c2 - m2) / (m2 * m2 * m2)
        })
        .collect();
    let kurt_se = series_mean(&influence);

    ComponentCheck {
        shell,
        comp,
        variance: var.mean,
        expected_variance: expected,
        variance_se: var.std_error,
        z_variance: (var.mean - expected) / var.std_error,
        excess_kurtosis: kurt,
        kurtosis_se: kurt_se.std_error,
        z_kurtosis: kurt / kurt_se.std_error,
        effective_samples: var.effective_samples.min(kurt_se.effective_samples),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::sample_with;
    use crate::rng::sample_block_stream;
    use crate::space::SpectralParams;

    fn params() -> MeasureParams {
        MeasureParams::new(1.0, 1.0, SpectralParams::new(1.0, 2.0, 6).unwrap()).unwrap()
    }

    fn iid(p: &MeasureParams, n: usize, seed: u64) -> Vec<ShellState> {
        let mut rng = sample_block_stream(seed, 0);
        (0..n).map(|_| sample_with(p, &mut rng)).collect()
    }

    #[test]
    fn iid_samples_pass() {
        let p = params();
        let r = invariance_test(&iid(&p, 50_000, 1), &p, 6).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{r:?}");
        assert_eq!(r.checks.len(), 12);
    }

    #[test]
    fn wrong_variance_fails() {
        let p = params();
        let scaled: Vec<ShellState> = iid(&p, 50_000, 2).iter().map(|s| s.scaled(1.05)).collect();
        assert_eq!(invariance_test(&scaled, &p, 3).unwrap().verdict, Verdict::Fail);
    }

    #[test]
    fn heavy_tails_fail() {
        // A scale mixture keeps the variance but adds kurtosis.
        let p = params();
        let mixed: Vec<ShellState> = iid(&p, 50_000, 3)
            .iter()
            .enumerate()
            .map(|(k, s)| s.scaled(if k % 2 == 0 { 0.6 } else { 1.28 }))
            .collect();
        let r = invariance_test(&mixed, &p, 2).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        assert!(r.checks.iter().any(|c| c.z_kurtosis.abs() > 4.0));
    }

    #[test]
    fn too_few_samples_is_insufficient() {
        let p = params();
        assert!(matches!(
            invariance_test(&iid(&p, 20, 4), &p, 2),
            Err(Error::InsufficientData { .. })
        ));
        assert!(invariance_test(&iid(&p, 20, 4), &p, 7).is_err());
    }
}
