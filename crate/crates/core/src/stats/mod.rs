//! Streaming moments, autocorrelation analysis and the statistical checks
//! run against the invariant measure.

mod accumulator;
mod autocorr;
mod holder;
mod invariance;
mod semigroup;
mod tail;

pub use accumulator::{MomentAccumulator, Moments};
pub use autocorr::{
    autocorrelation_series, autocovariance, fitted_decay_rate, integrated_autocorr_time, series_mean, AutocorrEstimate,
    SeriesMean, MIN_EFFECTIVE_SAMPLES,
};
pub use holder::{holder_quotients, HolderQuotient};
pub use invariance::{invariance_test, ComponentCheck, InvarianceReport};
pub use semigroup::{semigroup_decay_check, SemigroupPoint, SemigroupReport, MAX_RELATIVE_SE};
pub use tail::{tail_decay_report, TailDecayReport, TailRow};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};

/// Two-sided z-score threshold of every statistical check.
pub const Z_THRESHOLD: f64 = 4.0;

/// Batches used for autocorrelation standard errors.
pub const AUTOCORR_BATCHES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    pub fn from_pass(pass: bool) -> Self {
        if pass {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    /// Fail if any fails, else inconclusive if any is, else pass.
    pub fn combine(verdicts: impl IntoIterator<Item = Verdict>) -> Self {
        verdicts.into_iter().fold(Verdict::Pass, |acc, v| match (acc, v) {
            (Verdict::Fail, _) | (_, Verdict::Fail) => Verdict::Fail,
            (Verdict::Inconclusive, _) | (_, Verdict::Inconclusive) => Verdict::Inconclusive,
            _ => Verdict::Pass,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Autocorrelation of the component `x_{n,i}` along a trajectory with equally
/// spaced snapshots, at time lags that are multiples of the snapshot spacing.
pub fn autocorrelation(traj: &Trajectory, shell: usize, comp: usize, lags: &[f64]) -> Result<AutocorrEstimate> {
    let dt = traj
        .sample_interval()
        .ok_or_else(|| Error::Precondition("trajectory has fewer than 2 snapshots".into()))?;
    autocorrelation_series(
        &format!("x[{shell},{comp}]"),
        &traj.component_series(shell, comp),
        dt,
        lags,
        AUTOCORR_BATCHES,
    )
}
