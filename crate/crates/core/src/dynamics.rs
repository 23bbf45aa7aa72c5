//! Time integration of the shell model.
//!
//! The stochastic equation with viscosity scale `ε`,
//! `du + [ν ε A u + B(u,u)] dt = sqrt(2 ε A^{1-β}) dw`,
//! is integrated with an exponential integrator: the linear part and the
//! noise are treated exactly per mode, and only the nonlinearity is frozen
//! over a step. `ε = 1` is the reference stochastic equation and, for every
//! `ε > 0`, the linear part alone leaves `N(0, ν⁻¹A^{-β})` invariant. With
//! `ε = 0` the equation is the inviscid `du/dt + B(u,u) = 0`, integrated by
//! classical RK4 or the implicit midpoint rule.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{sample_with, MeasureParams};
use crate::rng::{fill_normals, initial_stream, noise_stream};
use crate::sabra::{BKernel, SabraCoefficients};
use crate::space::{ShellState, SpectralParams};

/// A trajectory whose norm exceeds this multiple of its initial scale is
/// reported as diverged.
pub const BLOWUP_FACTOR: f64 = 1e6;
/// Relative fixed-point tolerance of the implicit midpoint solver.
pub const MIDPOINT_TOLERANCE: f64 = 1e-13;
pub const MIDPOINT_MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Exact transition of the linear (Ornstein–Uhlenbeck) equation; the
    /// nonlinearity is ignored.
    OuExact,
    /// Exponential Euler–Maruyama for the full stochastic equation.
    ExpoEm,
    /// Classical fourth-order Runge–Kutta for the inviscid equation.
    Rk4,
    /// Implicit midpoint rule for the inviscid equation.
    ImplicitMidpoint,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::OuExact, Scheme::ExpoEm, Scheme::Rk4, Scheme::ImplicitMidpoint];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::OuExact => "ou_exact",
            Scheme::ExpoEm => "expo_em",
            Scheme::Rk4 => "rk4",
            Scheme::ImplicitMidpoint => "implicit_midpoint",
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, Scheme::OuExact | Scheme::ExpoEm)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL.into_iter().find(|sc| sc.name() == s).ok_or_else(|| {
            Error::invalid(
                "scheme",
                format!("unknown scheme `{s}` (expected ou_exact, expo_em, rk4 or implicit_midpoint)"),
            )
        })
    }
}

/// Parameters of one simulation. The viscosity `ν`, `β` and the spectrum are
/// taken from `measure`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Viscosity scale; `0` selects the inviscid equation.
    pub epsilon: f64,
    pub coeffs: SabraCoefficients,
    pub measure: MeasureParams,
    pub seed: u64,
    pub scheme: Scheme,
    /// Record every `stride`-th step.
    pub stride: usize,
}

impl SimConfig {
    /// Defaults to `ε = 1`, seed 0 and stride 1 for stochastic schemes, and
    /// `ε = 0` for the inviscid ones.
    pub fn new(coeffs: SabraCoefficients, measure: MeasureParams, scheme: Scheme, dt: f64, t_end: f64) -> Result<Self> {
        let cfg = SimConfig {
            dt,
            t_end,
            epsilon: if scheme.is_stochastic() { 1.0 } else { 0.0 },
            coeffs,
            measure,
            seed: 0,
            scheme,
            stride: 1,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Result<Self> {
        self.stride = stride;
        self.validate()?;
        Ok(self)
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        self.epsilon = epsilon;
        self.validate()?;
        Ok(self)
    }

    pub fn spectral(&self) -> &SpectralParams {
        self.measure.spectral()
    }

    pub fn nu(&self) -> f64 {
        self.measure.nu()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid("dt", format!("must be finite and > 0, got {}", self.dt)));
        }
        if !(self.t_end.is_finite() && self.t_end >= self.dt) {
            return Err(Error::invalid(
                "t_end",
                format!("must be finite and >= dt, got {}", self.t_end),
            ));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::invalid(
                "epsilon",
                format!("must be finite and >= 0, got {}", self.epsilon),
            ));
        }
        if self.stride == 0 {
            return Err(Error::invalid("stride", "must be >= 1"));
        }
        if self.scheme.is_stochastic() && self.epsilon == 0.0 {
            return Err(Error::invalid(
                "epsilon",
                format!("epsilon = 0 forbids the stochastic scheme {}", self.scheme),
            ));
        }
        if !self.scheme.is_stochastic() && self.epsilon != 0.0 {
            return Err(Error::invalid(
                "epsilon",
                format!("the inviscid scheme {} requires epsilon = 0", self.scheme),
            ));
        }
        if self.coeffs.lambda() != self.spectral().lambda() {
            return Err(Error::invalid("lambda", "coefficient and spectrum shell ratios differ"));
        }
        if self.scheme == Scheme::ExpoEm && (self.coeffs.beta() - self.measure.beta()).abs() > 1e-12 {
            return Err(Error::invalid(
                "beta",
                format!(
                    "measure β = {} differs from the coefficients' β = {}",
                    self.measure.beta(),
                    self.coeffs.beta()
                ),
            ));
        }
        let steps = (self.t_end / self.dt).round();
        if (steps * self.dt - self.t_end).abs() > 1e-9 * self.t_end {
            return Err(Error::invalid(
                "t_end",
                format!("{} is not a multiple of dt = {}", self.t_end, self.dt),
            ));
        }
        Ok(())
    }

    /// Number of steps from 0 to `t_end`.
    pub fn steps(&self) -> u64 {
        (self.t_end / self.dt).round() as u64
    }
}

/// `φ₁(z) = (1 - e^{-z}) / z`, with `φ₁(0) = 1`.
fn phi1(z: f64) -> f64 {
    if z == 0.0 {
        1.0
    } else {
        -(-z).exp_m1() / z
    }
}

/// Per-mode coefficients of the exact linear transition over `dt` with
/// damping `θ_n = ν ε λ_n` and stationary variance `1/(ν λ_n^β)`.
#[derive(Debug, Clone)]
struct LinearPropagator {
    decay: Vec<f64>,
    /// `dt φ₁(θ_n dt)`, the weight of a frozen forcing over the step.
    forcing: Vec<f64>,
    sigma: Vec<f64>,
}

impl LinearPropagator {
    fn new(measure: &MeasureParams, epsilon: f64, dt: f64) -> Self {
        let sp = measure.spectral();
        let m = sp.shells();
        let mut p = LinearPropagator {
            decay: Vec::with_capacity(m),
            forcing: Vec::with_capacity(m),
            sigma: Vec::with_capacity(m),
        };
        for n in 1..=m {
            let z = measure.nu() * epsilon * sp.eigenvalue(n) * dt;
            p.decay.push((-z).exp());
            p.forcing.push(dt * phi1(z));
            p.sigma.push((measure.variance(n) * -(-2.0 * z).exp_m1()).sqrt());
        }
        p
    }
}

/// Reusable one-step integrator for a fixed configuration.
#[derive(Debug, Clone)]
pub struct Stepper {
    scheme: Scheme,
    dt: f64,
    linear: Option<LinearPropagator>,
    kernel: BKernel,
    scratch: [Vec<[f64; 2]>; 4],
}

impl Stepper {
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let m = cfg.spectral().shells();
        Ok(Stepper {
            scheme: cfg.scheme,
            dt: cfg.dt,
            linear: cfg
                .scheme
                .is_stochastic()
                .then(|| LinearPropagator::new(&cfg.measure, cfg.epsilon, cfg.dt)),
            kernel: BKernel::new(cfg.spectral(), &cfg.coeffs),
            scratch: std::array::from_fn(|_| vec![[0.0; 2]; m]),
        })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advances `u` by one step in place. `noise` holds one standard normal
    /// per component and is ignored by the inviscid schemes.
    pub fn step(&mut self, u: &mut [[f64; 2]], noise: &[[f64; 2]]) -> Result<()> {
        match self.scheme {
            Scheme::OuExact => {
                let lin = self.linear.as_ref().expect("stochastic scheme");
                for (n, x) in u.iter_mut().enumerate() {
                    for i in 0..2 {
                        x[i] = lin.decay[n] * x[i] + lin.sigma[n] * noise[n][i];
                    }
                }
            }
            Scheme::ExpoEm => {
                let lin = self.linear.as_ref().expect("stochastic scheme");
                let b = &mut self.scratch[0];
                self.kernel.apply(u, u, b);
                for (n, x) in u.iter_mut().enumerate() {
                    for i in 0..2 {
                        x[i] = (lin.decay[n] * x[i] - lin.forcing[n] * b[n][i]) + lin.sigma[n] * noise[n][i];
                    }
                }
            }
            Scheme::Rk4 => self.rk4(u),
            Scheme::ImplicitMidpoint => self.midpoint(u)?,
        }
        Ok(())
    }

    fn rk4(&mut self, u: &mut [[f64; 2]]) {
        let dt = self.dt;
        let [k, acc, stage, _] = &mut self.scratch;
        // k1
        self.kernel.apply(u, u, k);
        for n in 0..u.len() {
            for i in 0..2 {
                acc[n][i] = -k[n][i];
                stage[n][i] = u[n][i] - 0.5 * dt * k[n][i];
            }
        }
        // k2, k3
        for (weight, next) in [(2.0, 0.5), (2.0, 1.0)] {
            self.kernel.apply(stage, stage, k);
            for n in 0..u.len() {
                for i in 0..2 {
                    acc[n][i] -= weight * k[n][i];
                    stage[n][i] = u[n][i] - next * dt * k[n][i];
                }
            }
        }
        // k4
        self.kernel.apply(stage, stage, k);
        for n in 0..u.len() {
            for i in 0..2 {
                acc[n][i] -= k[n][i];
                u[n][i] += dt / 6.0 * acc[n][i];
            }
        }
    }

    fn midpoint(&mut self, u: &mut [[f64; 2]]) -> Result<()> {
        let dt = self.dt;
        let [b, next, mid, _] = &mut self.scratch;
        let scale = u.iter().map(|x| x[0] * x[0] + x[1] * x[1]).sum::<f64>().sqrt();
        // explicit Euler predictor
        self.kernel.apply(u, u, b);
        for n in 0..u.len() {
            for i in 0..2 {
                next[n][i] = u[n][i] - dt * b[n][i];
            }
        }
        let mut residual = f64::INFINITY;
        for _ in 0..MIDPOINT_MAX_ITERATIONS {
            for n in 0..u.len() {
                for i in 0..2 {
                    mid[n][i] = 0.5 * (u[n][i] + next[n][i]);
                }
            }
            self.kernel.apply(mid, mid, b);
            let mut diff2 = 0.0;
            for n in 0..u.len() {
                for i in 0..2 {
                    let v = u[n][i] - dt * b[n][i];
                    diff2 += (v - next[n][i]).powi(2);
                    next[n][i] = v;
                }
            }
            residual = diff2.sqrt();
            if !residual.is_finite() {
                break;
            }
            if residual <= MIDPOINT_TOLERANCE * scale {
                u.copy_from_slice(next);
                return Ok(());
            }
        }
        Err(Error::MidpointNonconvergence {
            iterations: MIDPOINT_MAX_ITERATIONS,
            residual,
        })
    }
}

fn check_noise(u: &ShellState, noise: &[[f64; 2]]) -> Result<()> {
    if noise.len() != u.params().shells() {
        return Err(Error::Precondition(format!(
            "noise has {} shells, state has {}",
            noise.len(),
            u.params().shells()
        )));
    }
    Ok(())
}

fn check_state(u: &ShellState, cfg: &SimConfig) -> Result<()> {
    if u.params() != cfg.spectral() {
        return Err(Error::Precondition("state and configuration spectra differ".into()));
    }
    Ok(())
}

/// One exact step of `dz + ν A z dt = sqrt(2 A^{1-β}) dw`:
/// `z'_n = e^{-ν λ_n dt} z_n + σ_n(dt) ξ_n` with
/// `σ_n(dt)² = (1 - e^{-2 ν λ_n dt}) / (ν λ_n^β)`.
pub fn ou_exact_step(z: &ShellState, dt: f64, params: &MeasureParams, noise: &[[f64; 2]]) -> Result<ShellState> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid("dt", format!("must be finite and > 0, got {dt}")));
    }
    if z.params() != params.spectral() {
        return Err(Error::Precondition("state and measure spectra differ".into()));
    }
    check_noise(z, noise)?;
    let lin = LinearPropagator::new(params, 1.0, dt);
    let shells = z
        .shells()
        .iter()
        .enumerate()
        .map(|(n, x)| {
            [
                lin.decay[n] * x[0] + lin.sigma[n] * noise[n][0],
                lin.decay[n] * x[1] + lin.sigma[n] * noise[n][1],
            ]
        })
        .collect();
    ShellState::new(*z.params(), shells)
}

/// One exponential Euler–Maruyama step of the stochastic equation:
/// `u' = e^{-θ dt} u - dt φ₁(θ dt) B(u,u) + σ(dt) ξ`, `θ_n = ν ε λ_n`.
pub fn sde_step(u: &ShellState, cfg: &SimConfig, noise: &[[f64; 2]]) -> Result<ShellState> {
    if cfg.scheme != Scheme::ExpoEm {
        return Err(Error::Precondition(format!(
            "sde_step needs expo_em, got {}",
            cfg.scheme
        )));
    }
    check_state(u, cfg)?;
    check_noise(u, noise)?;
    let mut x = u.shells().to_vec();
    Stepper::new(cfg)?.step(&mut x, noise)?;
    ShellState::new(*u.params(), x)
}

/// One step of `du/dt + B(u,u) = 0` with `rk4` or `implicit_midpoint`.
pub fn inviscid_step(u: &ShellState, dt: f64, coeffs: &SabraCoefficients, scheme: Scheme) -> Result<ShellState> {
    if scheme.is_stochastic() {
        return Err(Error::Precondition(format!("{scheme} is not an inviscid scheme")));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid("dt", format!("must be finite and > 0, got {dt}")));
    }
    if coeffs.lambda() != u.params().lambda() {
        return Err(Error::Precondition(
            "coefficient and spectrum shell ratios differ".into(),
        ));
    }
    let kernel = BKernel::new(u.params(), coeffs);
    let m = u.params().shells();
    let mut stepper = Stepper {
        scheme,
        dt,
        linear: None,
        kernel,
        scratch: std::array::from_fn(|_| vec![[0.0; 2]; m]),
    };
    let mut x = u.shells().to_vec();
    stepper.step(&mut x, &[])?;
    ShellState::new(*u.params(), x)
}

/// Initial condition of a simulation.
#[derive(Debug, Clone, PartialEq)]
pub enum Initial {
    State(ShellState),
    /// A draw from the configured Gaussian measure.
    Stationary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    /// Ensemble member index, which selects the random streams.
    pub member: u64,
    /// Hash of the configuration that produced the run, if the caller set one.
    pub config_hash: Option<String>,
}

/// Snapshots `(t_k, u(t_k))` at the configured stride.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<ShellState>,
    pub provenance: Provenance,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn with_config_hash(mut self, hash: impl Into<String>) -> Self {
        self.provenance.config_hash = Some(hash.into());
        self
    }

    /// Time series of one component `x_{n,i}`.
    pub fn component_series(&self, n: usize, i: usize) -> Vec<f64> {
        self.states.iter().map(|s| s.component(n, i)).collect()
    }

    /// Spacing between consecutive snapshots.
    pub fn sample_interval(&self) -> Option<f64> {
        (self.times.len() >= 2).then(|| self.times[1] - self.times[0])
    }
}

/// Runs ensemble member `member` and hands every recorded snapshot to
/// `record`, without storing the trajectory. Returns the final state.
pub fn simulate_with<F>(cfg: &SimConfig, initial: &Initial, member: u64, mut record: F) -> Result<ShellState>
where
    F: FnMut(f64, &ShellState) -> Result<()>,
{
    let mut stepper = Stepper::new(cfg)?;
    let sp = *cfg.spectral();
    let u0 = match initial {
        Initial::State(s) => {
            check_state(s, cfg)?;
            s.clone()
        }
        Initial::Stationary => sample_with(&cfg.measure, &mut initial_stream(cfg.seed, member)),
    };
    let mut scale = u0.norm();
    if scale == 0.0 && cfg.scheme.is_stochastic() {
        scale = cfg.measure.mean_energy().sqrt();
    }
    let threshold = BLOWUP_FACTOR * scale;
    let mut noise_rng = noise_stream(cfg.seed, member);
    let mut noise = vec![[0.0; 2]; sp.shells()];
    let mut u = u0.into_shells();
    record(0.0, &ShellState::new(sp, u.clone())?)?;
    for k in 1..=cfg.steps() {
        let t = k as f64 * cfg.dt;
        if cfg.scheme.is_stochastic() {
            fill_normals(&mut noise_rng, &mut noise);
        }
        stepper.step(&mut u, &noise).map_err(|e| Error::StepFailed {
            time: t,
            source: Box::new(e),
        })?;
        let norm = u.iter().map(|x| x[0] * x[0] + x[1] * x[1]).sum::<f64>().sqrt();
        if !norm.is_finite() || norm > threshold {
            return Err(Error::TrajectoryDiverged { time: t });
        }
        if k % cfg.stride as u64 == 0 {
            record(t, &ShellState::from_parts_unchecked(sp, u.clone()))?;
        }
    }
    Ok(ShellState::from_parts_unchecked(sp, u))
}

/// Runs ensemble member `member` and stores its snapshots.
pub fn simulate_member(cfg: &SimConfig, initial: &Initial, member: u64) -> Result<Trajectory> {
    let cap = (cfg.steps() / cfg.stride as u64 + 1) as usize;
    let mut times = Vec::with_capacity(cap);
    let mut states = Vec::with_capacity(cap);
    simulate_with(cfg, initial, member, |t, s| {
        times.push(t);
        states.push(s.clone());
        Ok(())
    })?;
    Ok(Trajectory {
        times,
        states,
        provenance: Provenance {
            seed: cfg.seed,
            member,
            config_hash: None,
        },
    })
}

/// Runs ensemble member 0.
pub fn simulate(cfg: &SimConfig, initial: &Initial) -> Result<Trajectory> {
    simulate_member(cfg, initial, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::sample;
    use crate::rng::stream;
    use crate::space::{apply_power, SpectralParams};

    fn measure(m: usize) -> MeasureParams {
        MeasureParams::new(1.0, 1.0, SpectralParams::new(1.0, 2.0, m).unwrap()).unwrap()
    }

    fn reference() -> SabraCoefficients {
        SabraCoefficients::reference(2.0).unwrap()
    }

    fn normals(m: usize, id: u64) -> Vec<[f64; 2]> {
        let mut v = vec![[0.0; 2]; m];
        fill_normals(&mut stream(99, id), &mut v);
        v
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
        assert!("euler".parse::<Scheme>().is_err());
    }

    #[test]
    fn config_validation() {
        let c = reference();
        let p = measure(6);
        assert!(SimConfig::new(c, p, Scheme::ExpoEm, 1e-3, 1.0).is_ok());
        assert!(SimConfig::new(c, p, Scheme::ExpoEm, 0.0, 1.0).is_err());
        assert!(SimConfig::new(c, p, Scheme::ExpoEm, 1.0, 0.5).is_err());
        assert!(SimConfig::new(c, p, Scheme::ExpoEm, 0.3, 1.0).is_err());
        let cfg = SimConfig::new(c, p, Scheme::ExpoEm, 1e-3, 1.0).unwrap();
        assert!(cfg.clone().with_epsilon(0.0).is_err());
        assert!(cfg.clone().with_stride(0).is_err());
        let inviscid = SimConfig::new(c, p, Scheme::Rk4, 1e-3, 1.0).unwrap();
        assert_eq!(inviscid.epsilon, 0.0);
        assert!(inviscid.with_epsilon(0.5).is_err());
        let other_beta = MeasureParams::new(0.75, 1.0, *p.spectral()).unwrap();
        assert!(SimConfig::new(c, other_beta, Scheme::ExpoEm, 1e-3, 1.0).is_err());
        assert!(SimConfig::new(c, other_beta, Scheme::OuExact, 1e-3, 1.0).is_ok());
    }

    #[test]
    fn ou_zero_noise_is_pure_decay() {
        let p = measure(5);
        let z = sample(&p, 1);
        let out = ou_exact_step(&z, 0.01, &p, &[[0.0; 2]; 5]).unwrap();
        for n in 1..=5 {
            let d = (-p.spectral().eigenvalue(n) * 0.01).exp();
            assert_eq!(out.shell(n), [d * z.shell(n)[0], d * z.shell(n)[1]]);
        }
    }

    #[test]
    fn ou_long_step_forgets_initial_state() {
        let p = measure(4);
        let z = sample(&p, 1);
        let xi = normals(4, 0);
        let out = ou_exact_step(&z, 1e3, &p, &xi).unwrap();
        for n in 1..=4 {
            assert_eq!(out.shell(n)[0], p.variance(n).sqrt() * xi[n - 1][0]);
        }
    }

    #[test]
    fn expo_em_without_nonlinearity_is_ou_exact() {
        let p = measure(8);
        let zero = SabraCoefficients::with_beta(0.0, 0.0, 2.0, 1.0).unwrap();
        let cfg = SimConfig::new(zero, p, Scheme::ExpoEm, 2e-3, 1.0).unwrap();
        let mut u = sample(&p, 4);
        for k in 0..50 {
            let xi = normals(8, k);
            let a = sde_step(&u, &cfg, &xi).unwrap();
            let b = ou_exact_step(&u, cfg.dt, &p, &xi).unwrap();
            assert_eq!(a, b);
            u = a;
        }
    }

    /// Deterministic drift error: one step of size `dt` against two of size
    /// `dt/2`, with zero noise, shrinks like `dt²`.
    #[test]
    fn expo_em_local_error_is_second_order() {
        let p = measure(8);
        let c = reference();
        let u = sample(&p, 7);
        let zero = [[0.0; 2]; 8];
        let err = |dt: f64| {
            let full = SimConfig::new(c, p, Scheme::ExpoEm, dt, dt).unwrap();
            let half = SimConfig::new(c, p, Scheme::ExpoEm, dt / 2.0, dt).unwrap();
            let one = sde_step(&u, &full, &zero).unwrap();
            let two = sde_step(&sde_step(&u, &half, &zero).unwrap(), &half, &zero).unwrap();
            one.sub(&two).unwrap().norm()
        };
        let (e1, e2) = (err(2e-6), err(1e-6));
        let order = (e1 / e2).log2();
        assert!((1.8..=2.2).contains(&order), "observed order {order}");
    }

    #[test]
    fn zero_state_stays_zero_inviscid() {
        let p = measure(6);
        for scheme in [Scheme::Rk4, Scheme::ImplicitMidpoint] {
            let cfg = SimConfig::new(reference(), p, scheme, 1e-2, 1.0).unwrap();
            let traj = simulate(&cfg, &Initial::State(ShellState::zeros(*p.spectral()))).unwrap();
            assert_eq!(traj.len(), 101);
            assert!(traj.states.iter().all(|s| s.norm() == 0.0));
        }
    }

    #[test]
    fn trajectory_snapshots_follow_stride() {
        let p = measure(6);
        let cfg = SimConfig::new(reference(), p, Scheme::ExpoEm, 1e-3, 0.1)
            .unwrap()
            .with_stride(10)
            .unwrap()
            .with_seed(3);
        let t = simulate(&cfg, &Initial::Stationary).unwrap();
        assert_eq!(t.len(), 11);
        assert!(t.times.windows(2).all(|w| w[1] > w[0]));
        assert!((t.sample_interval().unwrap() - 0.01).abs() < 1e-15);
        assert_eq!(t, simulate(&cfg, &Initial::Stationary).unwrap());
        let other = simulate(&cfg.clone().with_seed(4), &Initial::Stationary).unwrap();
        assert_ne!(t.states[5], other.states[5]);
    }

    #[test]
    fn midpoint_conserves_both_invariants() {
        let p = measure(10);
        let c = reference();
        let u0 = sample(&p, 2);
        let cfg = SimConfig::new(c, p, Scheme::ImplicitMidpoint, 1e-3, 1.0).unwrap();
        let end = simulate(&cfg, &Initial::State(u0.clone())).unwrap();
        let last = end.states.last().unwrap();
        let e = |u: &ShellState| 0.5 * u.norm().powi(2);
        let s = |u: &ShellState| 0.5 * u.dot(&apply_power(u, 1.0)).unwrap();
        assert!((e(last) - e(&u0)).abs() <= 1e-12 * e(&u0));
        assert!((s(last) - s(&u0)).abs() <= 1e-12 * s(&u0));
        assert!(last.sub(&u0).unwrap().norm() > 1e-3, "state should move");
    }

    #[test]
    fn midpoint_reports_nonconvergence() {
        let p = measure(8);
        let u = sample(&p, 1).scaled(1e4);
        let err = inviscid_step(&u, 1.0, &reference(), Scheme::ImplicitMidpoint).unwrap_err();
        assert!(matches!(err, Error::MidpointNonconvergence { .. }));
    }

    #[test]
    fn blowup_guard_fires() {
        let p = measure(8);
        let cfg = SimConfig::new(reference(), p, Scheme::Rk4, 0.5, 50.0).unwrap();
        let err = simulate(&cfg, &Initial::State(sample(&p, 1).scaled(100.0))).unwrap_err();
        assert!(matches!(err, Error::TrajectoryDiverged { .. }), "{err:?}");
    }

    /// Two runs on the same noise path from nearby data: the log of the
    /// separation ratio is bounded by a multiple of the integrated squared
    /// norms, and shrinks with the initial perturbation.
    #[test]
    fn difference_growth_bounded_and_continuous() {
        let p = measure(8);
        let c = reference();
        let cfg = SimConfig::new(c, p, Scheme::ExpoEm, 1e-3, 2.0).unwrap().with_seed(11);
        let x = sample(&p, 5);
        let dir = sample(&p, 6);
        let run = |u: &ShellState| simulate(&cfg, &Initial::State(u.clone())).unwrap();
        let base = run(&x);
        let mut previous = f64::INFINITY;
        for eps in [1e-2, 1e-4, 1e-6, 1e-8] {
            let y = x.add_scaled(eps, &dir).unwrap();
            let other = run(&y);
            let d0 = eps * dir.norm();
            let mut integral = 0.0;
            let mut worst: f64 = 0.0;
            for k in 1..base.len() {
                let dt = base.times[k] - base.times[k - 1];
                integral += dt * (base.states[k].norm().powi(2) + other.states[k].norm().powi(2));
                let ratio = base.states[k].sub(&other.states[k]).unwrap().norm() / d0;
                worst = worst.max(ratio.ln() / integral);
            }
            let final_gap = base
                .states
                .last()
                .unwrap()
                .sub(other.states.last().unwrap())
                .unwrap()
                .norm();
            assert!(worst.is_finite() && worst < 200.0, "eps {eps}: slope {worst}");
            assert!(final_gap < previous, "eps {eps}: gap {final_gap} did not shrink");
            previous = final_gap;
        }
        assert!(previous < 1e-6);
    }
}
