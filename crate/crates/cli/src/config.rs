//! Flat key-value experiment configuration.
//!
//! A config is a TOML document whose values are scalars or arrays of numbers.
//! `--set key=value` overrides are parsed as TOML values, falling back to a
//! bare string, and merged over the file before validation.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sabra_core::dynamics::{Scheme, SimConfig};
use sabra_core::measure::{CylindricalPolynomial, Monomial, Var};
use sabra_core::{MeasureParams, SabraCoefficients, SpectralParams};

/// Tolerance for an explicitly given `beta` against the derived one.
pub const BETA_MATCH_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    VerifyAlgebra,
    SampleMeasure,
    Simulate,
    InvarianceTest,
    TailDecay,
    SemigroupDecay,
    InviscidConservation,
    Autocorr,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::VerifyAlgebra,
        ExperimentKind::SampleMeasure,
        ExperimentKind::Simulate,
        ExperimentKind::InvarianceTest,
        ExperimentKind::TailDecay,
        ExperimentKind::SemigroupDecay,
        ExperimentKind::InviscidConservation,
        ExperimentKind::Autocorr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::VerifyAlgebra => "verify-algebra",
            ExperimentKind::SampleMeasure => "sample-measure",
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::InvarianceTest => "invariance-test",
            ExperimentKind::TailDecay => "tail-decay",
            ExperimentKind::SemigroupDecay => "semigroup-decay",
            ExperimentKind::InviscidConservation => "inviscid-conservation",
            ExperimentKind::Autocorr => "autocorr",
        }
    }

    /// Whether the experiment integrates a trajectory in time.
    pub fn is_dynamic(self) -> bool {
        matches!(
            self,
            ExperimentKind::Simulate
                | ExperimentKind::InvarianceTest
                | ExperimentKind::SemigroupDecay
                | ExperimentKind::InviscidConservation
                | ExperimentKind::Autocorr
        )
    }

    /// Whether the experiment is meaningless without noise.
    fn needs_noise(self) -> bool {
        matches!(
            self,
            ExperimentKind::InvarianceTest | ExperimentKind::SemigroupDecay | ExperimentKind::Autocorr
        )
    }

    fn default_scheme(self) -> Scheme {
        match self {
            ExperimentKind::Autocorr => Scheme::OuExact,
            ExperimentKind::InviscidConservation => Scheme::ImplicitMidpoint,
            _ => Scheme::ExpoEm,
        }
    }

    fn default_t_end(self) -> f64 {
        match self {
            ExperimentKind::InvarianceTest | ExperimentKind::Autocorr => 200.0,
            _ => 1.0,
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| anyhow!("unknown experiment `{s}`"))
    }
}

/// Test function for `semigroup-decay`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    /// `x_{1,1}`
    Linear,
    /// `x_{1,1}² + x_{1,2} x_{2,1}`
    Quadratic,
}

impl Observable {
    pub fn polynomial(self) -> CylindricalPolynomial {
        let v = |n, i| Var::new(n, i).expect("valid variable");
        match self {
            Observable::Linear => CylindricalPolynomial::var(v(1, 1)),
            Observable::Quadratic => {
                let mut p = CylindricalPolynomial::zero();
                p.add_term(1.0, Monomial::new([(v(1, 1), 2)]));
                p.add_term(1.0, Monomial::new([(v(1, 2), 1), (v(2, 1), 1)]));
                p
            }
        }
    }
}

/// Every recognised key. Optional fields get experiment-dependent defaults
/// and are always filled after [`ExperimentConfig::resolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub k0: f64,
    pub lambda: f64,
    pub shells: usize,
    pub a: f64,
    pub b: f64,
    pub beta: Option<f64>,
    pub nu: f64,
    pub epsilon: Option<f64>,
    pub dt: f64,
    pub t_end: Option<f64>,
    pub scheme: Option<Scheme>,
    pub stride: usize,
    pub seed: u64,
    /// Monte Carlo draws for `sample-measure` and `tail-decay`.
    pub samples: usize,
    /// Draws written to `samples.csv` by `sample-measure`.
    pub sample_rows: usize,
    /// Independent stationary trajectories for `invariance-test`.
    pub ensemble: usize,
    /// Initial points for `semigroup-decay`.
    pub outer: usize,
    /// Noise replicas per initial point for `semigroup-decay`.
    pub n_rep: usize,
    pub n_max: Option<usize>,
    pub m_min: usize,
    pub m_max: Option<usize>,
    pub times: Vec<f64>,
    pub lags: Vec<f64>,
    pub triples: usize,
    pub observable: Observable,
    /// Relative drift tolerance for `inviscid-conservation`.
    pub tolerance: f64,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            k0: 1.0,
            lambda: 2.0,
            shells: 12,
            a: 1.0,
            b: -1.25,
            beta: None,
            nu: 1.0,
            epsilon: None,
            dt: 1e-4,
            t_end: None,
            scheme: None,
            stride: 100,
            seed: 0,
            samples: 100_000,
            sample_rows: 1000,
            ensemble: 1,
            outer: 1000,
            n_rep: 16,
            n_max: None,
            m_min: 4,
            m_max: None,
            times: vec![0.1, 0.5, 1.0],
            lags: vec![0.01, 0.05, 0.1, 0.5],
            triples: 1000,
            observable: Observable::Linear,
            tolerance: 1e-10,
            out: None,
        }
    }
}

/// Reads a flat TOML file, applies `KEY=VALUE` overrides and parses the
/// result into [`Settings`]. Errors name the offending key.
pub fn load_settings(path: Option<&Path>, overrides: &[String]) -> Result<Settings> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            text.parse::<toml::Table>()
                .with_context(|| format!("parsing config {}", p.display()))?
        }
        None => toml::Table::new(),
    };
    for (key, value) in &table {
        if value.is_table() {
            bail!("config must be flat: key `{key}` is a table");
        }
    }
    for entry in overrides {
        let (key, raw) = entry
            .split_once('=')
            .ok_or_else(|| anyhow!("override `{entry}` is not of the form key=value"))?;
        table.insert(key.trim().to_string(), parse_value(raw.trim()));
    }
    let text = toml::to_string(&table).context("re-encoding configuration")?;
    toml::from_str(&text).map_err(|e| anyhow!("invalid configuration: {}", e.to_string().trim_end()))
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Quantities derived at load time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    pub beta: f64,
    pub eigenvalues: Vec<f64>,
}

/// A validated configuration for one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Settings with every optional key filled in.
    pub settings: Settings,
    pub coeffs: SabraCoefficients,
    pub measure: MeasureParams,
    /// Present for experiments that integrate in time.
    pub sim: Option<SimConfig>,
}

impl ExperimentConfig {
    pub fn resolve(kind: ExperimentKind, mut s: Settings) -> Result<Self> {
        let spectral = SpectralParams::new(s.k0, s.lambda, s.shells).context("spectrum (k0, lambda, shells)")?;
        let coeffs = SabraCoefficients::new(s.a, s.b, s.lambda).context("coefficients (a, b, lambda)")?;
        if let Some(beta) = s.beta {
            if (beta - coeffs.beta()).abs() > BETA_MATCH_TOL {
                bail!(
                    "β mismatch: key `beta` = {beta} but a = {}, b = {}, lambda = {} give β = {}",
                    s.a,
                    s.b,
                    s.lambda,
                    coeffs.beta()
                );
            }
        }
        s.beta = Some(coeffs.beta());
        let measure = MeasureParams::new(coeffs.beta(), s.nu, spectral).context("measure (nu)")?;

        let n_max = *s.n_max.get_or_insert(s.shells);
        if n_max == 0 || n_max > s.shells {
            bail!("key `n_max` = {n_max} must lie in 1..={}", s.shells);
        }
        let m_max = *s.m_max.get_or_insert(s.shells.saturating_sub(2));
        if kind == ExperimentKind::TailDecay && !(2 <= s.m_min && s.m_min < m_max && m_max + 2 <= s.shells) {
            bail!(
                "keys `m_min` = {}, `m_max` = {m_max} must satisfy 2 <= m_min < m_max <= shells - 2 = {}",
                s.m_min,
                s.shells.saturating_sub(2)
            );
        }
        if kind == ExperimentKind::SemigroupDecay && s.times.is_empty() {
            bail!("key `times` must not be empty");
        }

        let sim = if kind.is_dynamic() {
            Some(resolve_sim(kind, &mut s, coeffs, measure)?)
        } else {
            None
        };
        Ok(ExperimentConfig {
            kind,
            settings: s,
            coeffs,
            measure,
            sim,
        })
    }

    pub fn derived(&self) -> Derived {
        Derived {
            beta: self.coeffs.beta(),
            eigenvalues: self.measure.spectral().eigenvalues(),
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.settings.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    /// SHA-256 of the experiment kind and the resolved settings.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(&(self.kind, &self.settings)).expect("settings serialise");
        format!("{:x}", Sha256::digest(json.as_bytes()))
    }

    pub fn sim(&self) -> &SimConfig {
        self.sim.as_ref().expect("dynamic experiment has a simulation config")
    }
}

fn resolve_sim(
    kind: ExperimentKind,
    s: &mut Settings,
    coeffs: SabraCoefficients,
    measure: MeasureParams,
) -> Result<SimConfig> {
    if kind.needs_noise() && s.epsilon == Some(0.0) {
        bail!("key `epsilon` = 0 forbids the noise-dependent experiment `{kind}`");
    }
    let scheme = *s.scheme.get_or_insert(match (kind, s.epsilon) {
        (ExperimentKind::Simulate, Some(0.0)) => Scheme::ImplicitMidpoint,
        _ => kind.default_scheme(),
    });
    if (kind.needs_noise() || kind == ExperimentKind::SemigroupDecay) && !scheme.is_stochastic() {
        bail!("key `scheme` = {scheme}: experiment `{kind}` needs a stochastic scheme");
    }
    if kind == ExperimentKind::InviscidConservation && scheme.is_stochastic() {
        bail!("key `scheme` = {scheme}: experiment `{kind}` needs rk4 or implicit_midpoint");
    }
    let epsilon = *s.epsilon.get_or_insert(if scheme.is_stochastic() { 1.0 } else { 0.0 });
    let t_end = *s.t_end.get_or_insert(match kind {
        ExperimentKind::SemigroupDecay => s.times.last().copied().unwrap_or(1.0).max(s.dt),
        _ => kind.default_t_end(),
    });
    let cfg = SimConfig::new(coeffs, measure, scheme, s.dt, t_end)
        .and_then(|c| c.with_epsilon(epsilon))
        .and_then(|c| c.with_stride(s.stride))
        .context("simulation settings")?;
    Ok(cfg.with_seed(s.seed))
}
