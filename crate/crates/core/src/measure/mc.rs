use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{sample_block_stream, SAMPLE_BLOCK};
use crate::space::ShellState;
use crate::stats::Moments;

use super::{sample_with, MeasureParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: u64,
}

impl McEstimate {
    pub(crate) fn from_moments(m: &Moments) -> Self {
        McEstimate {
            estimate: m.mean(),
            std_error: m.std_error(),
            samples: m.count(),
        }
    }

    /// `(estimate - target) / std_error`; zero when both the error and the
    /// standard error vanish.
    pub fn z_score(&self, target: f64) -> f64 {
        let d = self.estimate - target;
        if d == 0.0 {
            0.0
        } else {
            d / self.std_error
        }
    }
}

/// I.i.d. Monte Carlo estimates of several observables evaluated on the same
/// draws. `f` writes the `k` observable values of one state into its slice.
///
/// Draws are organised in fixed blocks with one random stream each, evaluated
/// in parallel and merged in block order, so the result depends only on the
/// seed.
pub fn mc_expectations<F>(
    f: F,
    k: usize,
    params: &MeasureParams,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<McEstimate>>
where
    F: Fn(&ShellState, &mut [f64]) + Sync,
{
    if n_samples < 2 {
        return Err(Error::Precondition(format!("need at least 2 samples, got {n_samples}")));
    }
    let blocks = n_samples.div_ceil(SAMPLE_BLOCK);
    let partial: Vec<Result<Vec<Moments>>> = (0..blocks)
        .into_par_iter()
        .map(|j| {
            let mut rng = sample_block_stream(seed, j as u64);
            let start = j * SAMPLE_BLOCK;
            let end = (start + SAMPLE_BLOCK).min(n_samples);
            let mut acc = vec![Moments::new(); k];
            let mut buf = vec![0.0; k];
            for index in start..end {
                let x = sample_with(params, &mut rng);
                f(&x, &mut buf);
                if buf.iter().any(|v| !v.is_finite()) {
                    return Err(Error::ObservableDiverged { index });
                }
                for (a, &v) in acc.iter_mut().zip(&buf) {
                    a.push(v);
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = vec![Moments::new(); k];
    for block in partial {
        for (t, m) in total.iter_mut().zip(block?) {
            t.merge(&m);
        }
    }
    Ok(total.iter().map(McEstimate::from_moments).collect())
}

/// I.i.d. Monte Carlo mean and standard error of `f` under the measure.
pub fn mc_expectation<F>(f: F, params: &MeasureParams, n_samples: usize, seed: u64) -> Result<McEstimate>
where
    F: Fn(&ShellState) -> f64 + Sync,
{
    mc_expectations(|x, out| out[0] = f(x), 1, params, n_samples, seed).map(|v| v[0])
}
