use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{SimConfig, Stepper};
use crate::error::{Error, Result};
use crate::measure::{sample_with, wick, CylindricalPolynomial, Var};
use crate::rng::{fill_normals, initial_stream, noise_stream};
use crate::space::ShellState;

use super::{Moments, Verdict, Z_THRESHOLD};

/// Above this relative standard error a comparison is reported inconclusive.
pub const MAX_RELATIVE_SE: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemigroupPoint {
    pub t: f64,
    /// Estimate of `∫ |P_t φ - φ̄|² dμ`.
    pub estimate: f64,
    pub std_error: f64,
    /// `e^{-λ_1 t} ∫ |φ - φ̄|² dμ`.
    pub bound: f64,
    /// `std_error / bound`.
    pub relative_se: f64,
    /// `bound · (1 + 4 relative_se)`.
    pub threshold: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemigroupReport {
    /// Exact `∫ φ dμ`.
    pub phi_mean: f64,
    /// Exact `∫ |φ - φ̄|² dμ`.
    pub phi_variance: f64,
    pub outer: usize,
    pub replicas: usize,
    pub points: Vec<SemigroupPoint>,
    pub verdict: Verdict,
}

/// Nested Monte Carlo check of `∫ |P_t φ - φ̄|² dμ ≤ e^{-λ_1 t} ∫ |φ - φ̄|² dμ`.
///
/// `n_outer` initial points are drawn from the measure (stream
/// `INITIAL | i`); each is evolved along `n_replicas` independent noise paths
/// (stream `NOISE | i·n_replicas + r`) with the stochastic scheme of `cfg`.
/// For each point the unbiased estimate `(m̄ - φ̄)² - s²/n_replicas` of
/// `(P_t φ(x) - φ̄)²` is formed from the replica mean `m̄` and variance `s²`,
/// and averaged over the outer points. `cfg.t_end` is ignored; the horizon is
/// the largest requested time.
pub fn semigroup_decay_check(
    cfg: &SimConfig,
    phi: &CylindricalPolynomial,
    times: &[f64],
    n_outer: usize,
    n_replicas: usize,
) -> Result<SemigroupReport> {
    if !cfg.scheme.is_stochastic() {
        return Err(Error::Precondition(format!(
            "{} is not a stochastic scheme",
            cfg.scheme
        )));
    }
    if n_outer < 2 || n_replicas < 2 {
        return Err(Error::Precondition(
            "need at least 2 outer points and 2 replicas".into(),
        ));
    }
    let sp = *cfg.spectral();
    if phi.max_shell() > sp.shells() {
        return Err(Error::Precondition(format!(
            "test function uses shell {} beyond truncation {}",
            phi.max_shell(),
            sp.shells()
        )));
    }
    if times.is_empty() || times.windows(2).any(|w| w[1] <= w[0]) || times[0] < 0.0 {
        return Err(Error::Precondition(
            "times must be nonnegative and strictly increasing".into(),
        ));
    }
    let steps: Vec<u64> = times
        .iter()
        .map(|&t| {
            let k = (t / cfg.dt).round();
            if (k * cfg.dt - t).abs() > 1e-9 * t.max(cfg.dt) {
                Err(Error::Precondition(format!(
                    "time {t} is not a multiple of dt = {}",
                    cfg.dt
                )))
            } else {
                Ok(k as u64)
            }
        })
        .collect::<Result<_>>()?;
    let mut horizon = cfg.clone();
    horizon.t_end = times.last().copied().unwrap().max(cfg.dt);
    let stepper = Stepper::new(&horizon)?;

    let measure = &cfg.measure;
    let var = |v: Var| measure.variance(v.shell);
    let phi_mean = wick::diagonal_expectation(phi, var)?;
    let phi_variance = wick::diagonal_expectation(&phi.mul(phi), var)? - phi_mean * phi_mean;
    let last = *steps.last().unwrap();

    let per_outer: Vec<Result<Vec<f64>>> = (0..n_outer)
        .into_par_iter()
        .map(|i| {
            let mut stepper = stepper.clone();
            let x = sample_with(measure, &mut initial_stream(cfg.seed, i as u64));
            let mut acc = vec![Moments::new(); steps.len()];
            let mut noise = vec![[0.0; 2]; sp.shells()];
            for r in 0..n_replicas {
                let mut rng = noise_stream(cfg.seed, (i * n_replicas + r) as u64);
                let mut u = x.shells().to_vec();
                let mut next = 0;
                for k in 0..=last {
                    if k > 0 {
                        fill_normals(&mut rng, &mut noise);
                        stepper.step(&mut u, &noise)?;
                    }
                    while next < steps.len() && steps[next] == k {
                        let s = ShellState::new(sp, u.clone()).map_err(|_| Error::TrajectoryDiverged {
                            time: k as f64 * cfg.dt,
                        })?;
                        acc[next].push(phi.evaluate(&s));
                        next += 1;
                    }
                }
            }
            Ok(acc
                .iter()
                .map(|m| (m.mean() - phi_mean).powi(2) - m.variance() / n_replicas as f64)
                .collect())
        })
        .collect();

    let mut totals = vec![Moments::new(); steps.len()];
    for values in per_outer {
        for (t, v) in totals.iter_mut().zip(values?) {
            t.push(v);
        }
    }
    let lambda1 = sp.eigenvalue(1);
    let points: Vec<SemigroupPoint> = times
        .iter()
        .zip(&totals)
        .map(|(&t, m)| {
            let bound = (-lambda1 * t).exp() * phi_variance;
            let relative_se = m.std_error() / bound;
            let threshold = bound * (1.0 + Z_THRESHOLD * relative_se);
            let verdict = if relative_se > MAX_RELATIVE_SE {
                Verdict::Inconclusive
            } else {
                Verdict::from_pass(m.mean() <= threshold)
            };
            SemigroupPoint {
                t,
                estimate: m.mean(),
                std_error: m.std_error(),
                bound,
                relative_se,
                threshold,
                verdict,
            }
        })
        .collect();
    Ok(SemigroupReport {
        phi_mean,
        phi_variance,
        outer: n_outer,
        replicas: n_replicas,
        verdict: Verdict::combine(points.iter().map(|p| p.verdict)),
        points,
    })
}
