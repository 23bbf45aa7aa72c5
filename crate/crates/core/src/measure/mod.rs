//! The centred Gaussian measure `μ^{β,ν} = N(0, ν⁻¹ A^{-β})` on the shell
//! space: sampling, exact moments and the Kolmogorov operator of the
//! stochastic dynamics.

mod kolmogorov;
mod mc;
mod moments;
pub mod poly;
pub mod wick;

pub use kolmogorov::{apply_kolmogorov, KolmogorovOperator};
pub use mc::{mc_expectation, mc_expectations, McEstimate};
pub use moments::{
    b_moment, expected_b_component_square, expected_b_sobolev_norm_sq, expected_tail_norm, symbolic_b_row,
    symbolic_tail_rows,
};
pub use poly::{CylindricalPolynomial, Monomial, Var};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, fill_normals};
use crate::space::{check_shell_index, ShellState, SpectralParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureParams {
    beta: f64,
    nu: f64,
    spectral: SpectralParams,
}

impl MeasureParams {
    pub fn new(beta: f64, nu: f64, spectral: SpectralParams) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::invalid("beta", format!("must be finite and > 0, got {beta}")));
        }
        if !(nu.is_finite() && nu > 0.0) {
            return Err(Error::invalid("nu", format!("must be finite and > 0, got {nu}")));
        }
        let p = MeasureParams { beta, nu, spectral };
        let smallest = p.variance(spectral.shells());
        if !(smallest.is_finite() && smallest > 0.0) {
            return Err(Error::invalid("beta", "top-shell variance underflows"));
        }
        Ok(p)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn spectral(&self) -> &SpectralParams {
        &self.spectral
    }

    /// Same measure on a spectrum truncated at a different level.
    pub fn with_shells(&self, shells: usize) -> Result<Self> {
        MeasureParams::new(self.beta, self.nu, self.spectral.with_shells(shells)?)
    }

    /// `1/(ν λ_n^β)` for any `n ≥ 1`, including shells beyond the truncation.
    pub fn variance(&self, n: usize) -> f64 {
        1.0 / (self.nu * self.spectral.eigenvalue(n).powf(self.beta))
    }

    /// Per-shell standard deviations for shells `1..=M`.
    pub fn std_devs(&self) -> Vec<f64> {
        (1..=self.spectral.shells()).map(|n| self.variance(n).sqrt()).collect()
    }

    /// `E|x|²` under the measure, truncated at `M`.
    pub fn mean_energy(&self) -> f64 {
        (1..=self.spectral.shells()).map(|n| 2.0 * self.variance(n)).sum()
    }
}

/// Variance `1/(ν λ_n^β)` of each component of shell `n`.
pub fn component_variance(params: &MeasureParams, n: usize) -> Result<f64> {
    check_shell_index(params.spectral(), n)?;
    Ok(params.variance(n))
}

/// Draws one state from the measure using the caller's generator.
pub fn sample_with<R: Rng + ?Sized>(params: &MeasureParams, rng: &mut R) -> ShellState {
    let mut shells = vec![[0.0; 2]; params.spectral.shells()];
    fill_normals(rng, &mut shells);
    for (n, x) in shells.iter_mut().enumerate() {
        let s = params.variance(n + 1).sqrt();
        x[0] *= s;
        x[1] *= s;
    }
    ShellState::from_parts_unchecked(params.spectral, shells)
}

/// One draw from the measure, reproducible from `seed`. This is the first
/// sample of the i.i.d. stream used by [`mc_expectation`].
pub fn sample(params: &MeasureParams, seed: u64) -> ShellState {
    sample_with(params, &mut rng::sample_block_stream(seed, 0))
}
