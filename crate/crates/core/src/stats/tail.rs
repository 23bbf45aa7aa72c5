use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{expected_tail_norm, mc_expectations, McEstimate, MeasureParams};
use crate::sabra::{BKernel, SabraCoefficients};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub m: usize,
    /// Exact `Σ_n ∫ |B^m_n - B_n|² dμ` by Wick pairing.
    pub exact: f64,
    pub monte_carlo: Option<McEstimate>,
}

impl TailRow {
    pub fn z_score(&self) -> Option<f64> {
        self.monte_carlo.map(|e| e.z_score(self.exact))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailDecayReport {
    pub rows: Vec<TailRow>,
    /// Least-squares slope of `ln(exact)` against `m`.
    pub fitted_log_rate: f64,
    /// `(2 - 4β) ln λ`, the slope of `k_m^{2-4β}`.
    pub predicted_log_rate: f64,
}

/// Tabulates the Galerkin tail `Σ_n ∫ |B^m_n(x,x) - B_n(x,x)|² μ(dx)` over
/// `m_range`, exactly and, when `mc_samples > 0`, by Monte Carlo on the same
/// draws for every `m`.
pub fn tail_decay_report(
    coeffs: &SabraCoefficients,
    params: &MeasureParams,
    m_range: RangeInclusive<usize>,
    mc_samples: usize,
    seed: u64,
) -> Result<TailDecayReport> {
    let sp = params.spectral();
    let (lo, hi) = (*m_range.start(), *m_range.end());
    if lo < 2 || hi < lo + 1 || hi + 2 > sp.shells() {
        return Err(Error::Precondition(format!(
            "m range {lo}..={hi} needs 2 <= m_min < m_max <= M - 2 = {}",
            sp.shells().saturating_sub(2)
        )));
    }
    let ms: Vec<usize> = m_range.collect();
    let exact = ms
        .iter()
        .map(|&m| expected_tail_norm(coeffs, params, m))
        .collect::<Result<Vec<_>>>()?;
    let mc = if mc_samples > 0 {
        let kernel = BKernel::new(sp, coeffs);
        let est = mc_expectations(
            |x, out| {
                for (o, &m) in out.iter_mut().zip(&ms) {
                    let r1 = kernel.tail_row(x.shells(), m, m - 1);
                    let r2 = kernel.tail_row(x.shells(), m, m);
                    *o = r1[0] * r1[0] + r1[1] * r1[1] + r2[0] * r2[0] + r2[1] * r2[1];
                }
            },
            ms.len(),
            params,
            mc_samples,
            seed,
        )?;
        est.into_iter().map(Some).collect()
    } else {
        vec![None; ms.len()]
    };
    let rows: Vec<TailRow> = ms
        .iter()
        .zip(exact)
        .zip(mc)
        .map(|((&m, exact), monte_carlo)| TailRow { m, exact, monte_carlo })
        .collect();
    Ok(TailDecayReport {
        fitted_log_rate: log_slope(&rows),
        predicted_log_rate: (2.0 - 4.0 * params.beta()) * sp.lambda().ln(),
        rows,
    })
}

fn log_slope(rows: &[TailRow]) -> f64 {
    let k = rows.len() as f64;
    let mx = rows.iter().map(|r| r.m as f64).sum::<f64>() / k;
    let my = rows.iter().map(|r| r.exact.ln()).sum::<f64>() / k;
    let sxy: f64 = rows.iter().map(|r| (r.m as f64 - mx) * (r.exact.ln() - my)).sum();
    let sxx: f64 = rows.iter().map(|r| (r.m as f64 - mx).powi(2)).sum();
    sxy / sxx
}
