use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::space::{sobolev_norm, SobolevIndex};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderQuotient {
    pub level: u32,
    /// Time separation `h = T / 2^level` of the pairs at this level.
    pub separation: f64,
    /// `sup_k ‖u(t_k + h) - u(t_k)‖_α / h^δ` over consecutive dyadic points.
    pub quotient: f64,
}

/// Hölder quotients of a path in `H^α` over dyadic partitions of its time
/// span, for levels `0..=max_level`. The number of snapshot intervals must be
/// divisible by `2^max_level` and snapshots must be equally spaced.
///
/// For a path in `C^δ` the quotients stay bounded as the level grows; for
/// exponents above the path regularity they grow geometrically.
pub fn holder_quotients(traj: &Trajectory, alpha: f64, delta: f64, max_level: u32) -> Result<Vec<HolderQuotient>> {
    let intervals = traj.len().saturating_sub(1);
    if intervals == 0 || max_level >= 63 || !intervals.is_multiple_of(1usize << max_level) {
        return Err(Error::Precondition(format!(
            "{intervals} snapshot intervals are not divisible by 2^{max_level}"
        )));
    }
    let dt = traj.sample_interval().unwrap();
    (0..=max_level)
        .map(|level| {
            let stride = intervals >> level;
            let h = stride as f64 * dt;
            let mut sup: f64 = 0.0;
            for k in (0..intervals).step_by(stride) {
                let d = traj.states[k + stride].sub(&traj.states[k])?;
                sup = sup.max(sobolev_norm(&d, SobolevIndex(alpha)));
            }
            Ok(HolderQuotient {
                level,
                separation: h,
                quotient: sup / h.powf(delta),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate, Initial, Scheme, SimConfig};
    use crate::measure::MeasureParams;
    use crate::sabra::SabraCoefficients;
    use crate::space::SpectralParams;

    #[test]
    fn ou_paths_are_holder_below_one_half() {
        let p = MeasureParams::new(1.0, 1.0, SpectralParams::new(1.0, 2.0, 6).unwrap()).unwrap();
        let cfg = SimConfig::new(
            SabraCoefficients::reference(2.0).unwrap(),
            p,
            Scheme::OuExact,
            1.0 / 8192.0,
            1.0,
        )
        .unwrap()
        .with_seed(2);
        let t = simulate(&cfg, &Initial::Stationary).unwrap();
        let growth = |delta: f64| {
            let q = holder_quotients(&t, 0.0, delta, 12).unwrap();
            q[12].quotient / q[4].quotient
        };
        assert!(growth(0.3) < 1.0, "δ = 0.3: {}", growth(0.3));
        assert!(growth(0.8) > 8.0, "δ = 0.8: {}", growth(0.8));
        assert!(holder_quotients(&t, 0.0, 0.3, 14).is_err());
    }
}
