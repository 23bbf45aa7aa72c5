use crate::error::{Error, Result};
use crate::sabra::{evaluate_b, SabraCoefficients};
use crate::space::ShellState;

use super::poly::{CylindricalPolynomial, Var};
use super::MeasureParams;

/// Kolmogorov operator of the stochastic dynamics restricted to one
/// cylindrical polynomial, with its derivatives precomputed:
///
/// `Kφ = Σ_{n,i} [ λ_n^{1-β} ∂²φ/∂x_{n,i}² - B_{n,i}(x,x) ∂φ/∂x_{n,i} - ν λ_n x_{n,i} ∂φ/∂x_{n,i} ]`.
///
/// `K = Q + L` with `Q` the Ornstein–Uhlenbeck part (second derivative and
/// linear drift) and `L` the transport by the nonlinearity.
#[derive(Debug, Clone)]
pub struct KolmogorovOperator {
    phi: CylindricalPolynomial,
    parts: Vec<VarPart>,
}

#[derive(Debug, Clone)]
struct VarPart {
    var: Var,
    diffusion: f64,
    damping: f64,
    first: CylindricalPolynomial,
    second: CylindricalPolynomial,
}

impl KolmogorovOperator {
    /// `φ` may only involve shells `≤ M - 2`, so that every `B_n` it needs is
    /// fully resolved at truncation `M`.
    pub fn new(phi: CylindricalPolynomial, coeffs: &SabraCoefficients, params: &MeasureParams) -> Result<Self> {
        let sp = params.spectral();
        if coeffs.lambda() != sp.lambda() {
            return Err(Error::Precondition("coefficient and spectrum ratios differ".into()));
        }
        if phi.max_shell() + 2 > sp.shells() {
            return Err(Error::Precondition(format!(
                "test function uses shell {} but truncation {} resolves B only up to shell {}",
                phi.max_shell(),
                sp.shells(),
                sp.shells() - 2
            )));
        }
        let parts = phi
            .vars()
            .map(|var| {
                let ev = sp.eigenvalue(var.shell);
                let first = phi.derivative(var);
                let second = first.derivative(var);
                VarPart {
                    var,
                    diffusion: ev.powf(1.0 - params.beta()),
                    damping: params.nu() * ev,
                    first,
                    second,
                }
            })
            .collect();
        Ok(KolmogorovOperator { phi, parts })
    }

    pub fn phi(&self) -> &CylindricalPolynomial {
        &self.phi
    }

    /// Ornstein–Uhlenbeck part `Qφ(x)`.
    pub fn q(&self, x: &ShellState) -> f64 {
        self.parts
            .iter()
            .map(|p| {
                let xi = x.component(p.var.shell, p.var.comp);
                p.diffusion * p.second.evaluate(x) - p.damping * xi * p.first.evaluate(x)
            })
            .sum()
    }

    /// Nonlinear part `Lφ(x)` given a precomputed `B(x, x)`.
    pub fn l_with(&self, x: &ShellState, bxx: &ShellState) -> f64 {
        -self
            .parts
            .iter()
            .map(|p| bxx.component(p.var.shell, p.var.comp) * p.first.evaluate(x))
            .sum::<f64>()
    }

    /// `Kφ(x) = Qφ(x) + Lφ(x)` given a precomputed `B(x, x)`.
    pub fn apply_with(&self, x: &ShellState, bxx: &ShellState) -> f64 {
        self.q(x) + self.l_with(x, bxx)
    }

    /// `|A^{(1-β)/2} Dφ|²(x) = Σ λ_n^{1-β} (∂φ/∂x_{n,i})²`, the carré du champ
    /// density (up to the factor 2 in `K φ² = 2 φ Kφ + 2 |A^{(1-β)/2} Dφ|²`).
    pub fn carre_du_champ(&self, x: &ShellState) -> f64 {
        self.parts
            .iter()
            .map(|p| p.diffusion * p.first.evaluate(x).powi(2))
            .sum()
    }
}

/// `Kφ(x)` for a single evaluation.
pub fn apply_kolmogorov(
    phi: &CylindricalPolynomial,
    x: &ShellState,
    coeffs: &SabraCoefficients,
    params: &MeasureParams,
) -> Result<f64> {
    if x.params() != params.spectral() {
        return Err(Error::Precondition("state and measure spectra differ".into()));
    }
    let k = KolmogorovOperator::new(phi.clone(), coeffs, params)?;
    let bxx = evaluate_b(x, x, coeffs)?;
    Ok(k.apply_with(x, &bxx))
}
