//! Shell state space: the spectrum of `A`, its fractional powers, Sobolev
//! norms and Galerkin projection.
//!
//! Shells are indexed from 1 as in the usual shell-model notation. Each shell
//! carries a real 2-vector (the real and imaginary parts of a complex mode),
//! and the operator `A` acts diagonally with eigenvalue `k0² λ^{2n}` on shell
//! `n`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest admissible top eigenvalue `λ_M`. Keeps every power used by the
/// toolkit (`λ_M^β` for β ≤ 2, products of two variances) well inside f64.
pub const MAX_EIGENVALUE: f64 = 1e16;

/// Smallest truncation level: the nonlinearity distinguishes shells 1, 2 and `n > 2`.
pub const MIN_SHELLS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralParams {
    k0: f64,
    lambda: f64,
    shells: usize,
}

impl SpectralParams {
    pub fn new(k0: f64, lambda: f64, shells: usize) -> Result<Self> {
        if !(k0.is_finite() && k0 > 0.0) {
            return Err(Error::invalid("k0", format!("must be finite and > 0, got {k0}")));
        }
        if !(lambda.is_finite() && lambda > 1.0) {
            return Err(Error::invalid(
                "lambda",
                format!("must be finite and > 1, got {lambda}"),
            ));
        }
        if shells < MIN_SHELLS {
            return Err(Error::invalid(
                "shells",
                format!("truncation must be at least {MIN_SHELLS}, got {shells}"),
            ));
        }
        let params = SpectralParams { k0, lambda, shells };
        let top = params.eigenvalue(shells);
        if !(top.is_finite() && top <= MAX_EIGENVALUE) {
            return Err(Error::invalid(
                "shells",
                format!("top eigenvalue {top:e} exceeds the supported range {MAX_EIGENVALUE:e}"),
            ));
        }
        Ok(params)
    }

    /// Same spectrum with a different truncation level.
    pub fn with_shells(&self, shells: usize) -> Result<Self> {
        SpectralParams::new(self.k0, self.lambda, shells)
    }

    pub fn k0(&self) -> f64 {
        self.k0
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Truncation level `M`.
    pub fn shells(&self) -> usize {
        self.shells
    }

    /// `λ_n = k0² λ^{2n}`. Defined for every `n ≥ 1`, including shells beyond
    /// the truncation (needed for moments of the untruncated nonlinearity).
    pub fn eigenvalue(&self, n: usize) -> f64 {
        debug_assert!(n >= 1, "shell indices start at 1");
        self.k0 * self.k0 * self.lambda.powi(2 * n as i32)
    }

    /// `k_n = sqrt(λ_n) = k0 λ^n`.
    pub fn wavenumber(&self, n: usize) -> f64 {
        debug_assert!(n >= 1, "shell indices start at 1");
        self.k0 * self.lambda.powi(n as i32)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        (1..=self.shells).map(|n| self.eigenvalue(n)).collect()
    }

    pub fn wavenumbers(&self) -> Vec<f64> {
        (1..=self.shells).map(|n| self.wavenumber(n)).collect()
    }
}

/// Index `α` of the Sobolev space `H^α = D(A^{α/2})`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct SobolevIndex(pub f64);

/// A truncated velocity configuration: `M` shells, each a real 2-vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellState {
    params: SpectralParams,
    shells: Vec<[f64; 2]>,
}

impl ShellState {
    pub fn new(params: SpectralParams, shells: Vec<[f64; 2]>) -> Result<Self> {
        if shells.len() != params.shells() {
            return Err(Error::invalid(
                "shells",
                format!("expected {} shells, got {}", params.shells(), shells.len()),
            ));
        }
        if let Some(n) = shells.iter().position(|x| !(x[0].is_finite() && x[1].is_finite())) {
            return Err(Error::invalid("shells", format!("non-finite entry in shell {}", n + 1)));
        }
        Ok(ShellState { params, shells })
    }

    /// Builds a state from a flat slice ordered `x_{1,1}, x_{1,2}, ..., x_{M,2}`.
    pub fn from_flat(params: SpectralParams, values: &[f64]) -> Result<Self> {
        if values.len() != 2 * params.shells() {
            return Err(Error::invalid(
                "shells",
                format!("expected {} components, got {}", 2 * params.shells(), values.len()),
            ));
        }
        let shells = values.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
        ShellState::new(params, shells)
    }

    pub fn zeros(params: SpectralParams) -> Self {
        ShellState {
            params,
            shells: vec![[0.0; 2]; params.shells()],
        }
    }

    /// State with a single nonzero shell `n` (1-based).
    pub fn single_shell(params: SpectralParams, n: usize, value: [f64; 2]) -> Result<Self> {
        check_shell_index(&params, n)?;
        let mut shells = vec![[0.0; 2]; params.shells()];
        shells[n - 1] = value;
        ShellState::new(params, shells)
    }

    /// Internal constructor for kernels whose outputs are finite by construction
    /// or are checked by the caller.
    pub(crate) fn from_parts_unchecked(params: SpectralParams, shells: Vec<[f64; 2]>) -> Self {
        debug_assert_eq!(shells.len(), params.shells());
        ShellState { params, shells }
    }

    pub fn params(&self) -> &SpectralParams {
        &self.params
    }

    pub fn shells(&self) -> &[[f64; 2]] {
        &self.shells
    }

    pub fn into_shells(self) -> Vec<[f64; 2]> {
        self.shells
    }

    /// Shell `n` (1-based); shells outside `1..=M` read as zero.
    pub fn shell(&self, n: usize) -> [f64; 2] {
        if n == 0 || n > self.shells.len() {
            [0.0; 2]
        } else {
            self.shells[n - 1]
        }
    }

    /// Component `i ∈ {1, 2}` of shell `n`.
    pub fn component(&self, n: usize, i: usize) -> f64 {
        debug_assert!(i == 1 || i == 2);
        self.shell(n)[i - 1]
    }

    pub fn flat(&self) -> Vec<f64> {
        self.shells.iter().flat_map(|x| x.iter().copied()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.shells.iter().all(|x| x[0].is_finite() && x[1].is_finite())
    }

    /// Plain inner product in `H`.
    pub fn dot(&self, other: &ShellState) -> Result<f64> {
        self.check_same(other)?;
        Ok(self
            .shells
            .iter()
            .zip(&other.shells)
            .map(|(x, y)| x[0] * y[0] + x[1] * y[1])
            .sum())
    }

    /// Norm in `H`, written `|u|`.
    pub fn norm(&self) -> f64 {
        self.shells
            .iter()
            .map(|x| x[0] * x[0] + x[1] * x[1])
            .sum::<f64>()
            .sqrt()
    }

    pub fn scaled(&self, c: f64) -> ShellState {
        let shells = self.shells.iter().map(|x| [c * x[0], c * x[1]]).collect();
        ShellState::from_parts_unchecked(self.params, shells)
    }

    /// `self + c · other`.
    pub fn add_scaled(&self, c: f64, other: &ShellState) -> Result<ShellState> {
        self.check_same(other)?;
        let shells = self
            .shells
            .iter()
            .zip(&other.shells)
            .map(|(x, y)| [x[0] + c * y[0], x[1] + c * y[1]])
            .collect();
        ShellState::new(self.params, shells)
    }

    pub fn sub(&self, other: &ShellState) -> Result<ShellState> {
        self.add_scaled(-1.0, other)
    }

    pub(crate) fn check_same(&self, other: &ShellState) -> Result<()> {
        if self.params != other.params {
            return Err(Error::Precondition(format!(
                "states live on different spectra: {:?} vs {:?}",
                self.params, other.params
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_shell_index(params: &SpectralParams, n: usize) -> Result<()> {
    if n == 0 || n > params.shells() {
        return Err(Error::Precondition(format!(
            "shell index {n} outside 1..={}",
            params.shells()
        )));
    }
    Ok(())
}

/// `λ_n = k0² λ^{2n}` for shell `n ≥ 1`.
pub fn eigenvalue(params: &SpectralParams, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Precondition("shell indices start at 1".into()));
    }
    Ok(params.eigenvalue(n))
}

/// `‖x‖_α = sqrt(Σ λ_n^α |x_n|²)`.
pub fn sobolev_norm(state: &ShellState, idx: SobolevIndex) -> f64 {
    sobolev_norm_sq(state, idx.0).sqrt()
}

pub(crate) fn sobolev_norm_sq(state: &ShellState, alpha: f64) -> f64 {
    let p = state.params();
    state
        .shells()
        .iter()
        .enumerate()
        .map(|(i, x)| p.eigenvalue(i + 1).powf(alpha) * (x[0] * x[0] + x[1] * x[1]))
        .sum()
}

/// `A^p x`, acting shell by shell as multiplication by `λ_n^p`.
pub fn apply_power(state: &ShellState, p: f64) -> ShellState {
    let params = *state.params();
    let shells = state
        .shells()
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let s = params.eigenvalue(i + 1).powf(p);
            [s * x[0], s * x[1]]
        })
        .collect();
    ShellState::from_parts_unchecked(params, shells)
}

/// Galerkin projection `Π_m`: keeps shells `1..=m` and zeroes the rest.
pub fn project(state: &ShellState, m: usize) -> Result<ShellState> {
    let params = *state.params();
    if m == 0 || m > params.shells() {
        return Err(Error::Precondition(format!(
            "projection level {m} outside 1..={}",
            params.shells()
        )));
    }
    let mut shells = state.shells().to_vec();
    for x in &mut shells[m..] {
        *x = [0.0; 2];
    }
    Ok(ShellState::from_parts_unchecked(params, shells))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HilbertSchmidtSum {
    pub partial_sum: f64,
    pub converges: bool,
    /// Value of the full series when it converges.
    pub limit: Option<f64>,
}

/// Partial sum `Σ_{n=1}^{N} λ_n^{α-β}` of the Hilbert–Schmidt series of the
/// embedding `H^β ⊂ H^α`, together with the analytic verdict. The terms are
/// geometric with ratio `λ^{2(α-β)}`, so the series converges iff `α < β`.
pub fn hilbert_schmidt_sum(params: &SpectralParams, alpha: f64, beta: f64, terms: usize) -> Result<HilbertSchmidtSum> {
    if terms == 0 {
        return Err(Error::Precondition("need at least one term".into()));
    }
    let d = alpha - beta;
    let partial_sum = (1..=terms).map(|n| params.eigenvalue(n).powf(d)).sum();
    let converges = d < 0.0;
    let limit = converges.then(|| {
        let ratio = params.lambda().powf(2.0 * d);
        params.k0().powf(2.0 * d) * ratio / (1.0 - ratio)
    });
    Ok(HilbertSchmidtSum {
        partial_sum,
        converges,
        limit,
    })
}
