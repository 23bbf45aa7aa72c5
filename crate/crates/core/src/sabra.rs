//! The Sabra bilinear operator `B`, its Galerkin truncation and the
//! antisymmetry/conservation identities it satisfies.
//!
//! Components follow the real (2-vector) form of the Sabra model. Shells with
//! index `< 1` or `> M` are read as zero everywhere.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{apply_power, project, ShellState, SpectralParams};

/// Interaction constants `a`, `b` of the Sabra model together with the shell
/// ratio `λ` and the exponent `β` of the conserved quantity `S_β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SabraCoefficients {
    a: f64,
    b: f64,
    lambda: f64,
    beta: f64,
}

impl SabraCoefficients {
    /// Validated coefficients with `β` solved from `λ^{2β} = -a/(a+b)`.
    pub fn new(a: f64, b: f64, lambda: f64) -> Result<Self> {
        let beta = beta_from_coefficients(a, b, lambda)?;
        Ok(SabraCoefficients { a, b, lambda, beta })
    }

    /// Coefficients with an externally imposed `β`. The pair `(a, b)` need not
    /// satisfy the `β` condition; `B` itself is defined for any real `a`, `b`.
    pub fn with_beta(a: f64, b: f64, lambda: f64, beta: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::invalid("a/b", "coefficients must be finite"));
        }
        if !(lambda.is_finite() && lambda > 1.0) {
            return Err(Error::invalid("lambda", format!("must be > 1, got {lambda}")));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::invalid("beta", format!("must be > 0, got {beta}")));
        }
        Ok(SabraCoefficients { a, b, lambda, beta })
    }

    /// The reference pair `a = 1`, `b = -(1 + λ^{-2})`, for which `β = 1`.
    pub fn reference(lambda: f64) -> Result<Self> {
        SabraCoefficients::new(1.0, -(1.0 + lambda.powi(-2)), lambda)
    }

    /// Coefficients with `a = 1` and `b` chosen so that the conserved exponent
    /// is the requested `β`.
    pub fn for_beta(lambda: f64, beta: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 1.0) {
            return Err(Error::invalid("lambda", format!("must be > 1, got {lambda}")));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::invalid("beta", format!("must be > 0, got {beta}")));
        }
        let b = -1.0 - lambda.powf(-2.0 * beta);
        SabraCoefficients::new(1.0, b, lambda)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Residual of `a + b λ^{2β} = (a+b) λ^{4β}`, relative to the largest term.
    pub fn beta_condition_residual(&self) -> f64 {
        let l2 = self.lambda.powf(2.0 * self.beta);
        let lhs = self.a + self.b * l2;
        let rhs = (self.a + self.b) * l2 * l2;
        let scale = self
            .a
            .abs()
            .max((self.b * l2).abs())
            .max(rhs.abs())
            .max(f64::MIN_POSITIVE);
        (lhs - rhs).abs() / scale
    }
}

/// `β = log(-a/(a+b)) / (2 log λ)`.
pub fn beta_from_coefficients(a: f64, b: f64, lambda: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::invalid("a/b", "coefficients must be finite"));
    }
    if !(lambda.is_finite() && lambda > 1.0) {
        return Err(Error::invalid("lambda", format!("must be > 1, got {lambda}")));
    }
    if a + b == 0.0 {
        return Err(Error::DegenerateCoefficients);
    }
    let ratio = -a / (a + b);
    if ratio.is_nan() || ratio <= 1.0 {
        return Err(Error::NoPositiveBeta { ratio });
    }
    Ok(ratio.ln() / (2.0 * lambda.ln()))
}

#[inline]
fn cross(x: [f64; 2], y: [f64; 2]) -> f64 {
    -x[1] * y[0] + x[0] * y[1]
}

#[inline]
fn dot(x: [f64; 2], y: [f64; 2]) -> f64 {
    x[0] * y[0] + x[1] * y[1]
}

/// Precomputed wavenumbers and coefficients for repeated evaluation of `B`
/// on a fixed spectrum.
#[derive(Debug, Clone)]
pub(crate) struct BKernel {
    /// `k[j - 1] = k_j` for `j = 1..=M + 2`.
    k: Vec<f64>,
    a: f64,
    b: f64,
    shells: usize,
}

impl BKernel {
    pub(crate) fn new(params: &SpectralParams, coeffs: &SabraCoefficients) -> Self {
        let shells = params.shells();
        BKernel {
            k: (1..=shells + 2).map(|j| params.wavenumber(j)).collect(),
            a: coeffs.a,
            b: coeffs.b,
            shells,
        }
    }

    #[inline]
    fn k(&self, j: usize) -> f64 {
        self.k[j - 1]
    }

    /// Writes `B(u, v)` into `out`.
    pub(crate) fn apply(&self, u: &[[f64; 2]], v: &[[f64; 2]], out: &mut [[f64; 2]]) {
        let m = self.shells;
        debug_assert!(u.len() == m && v.len() == m && out.len() == m);
        let at = |x: &[[f64; 2]], j: usize| -> [f64; 2] {
            if j == 0 || j > m {
                [0.0; 2]
            } else {
                x[j - 1]
            }
        };
        let (a, b) = (self.a, self.b);

        // n = 1
        {
            let k2 = self.k(2);
            let (u2, v3) = (at(u, 2), at(v, 3));
            out[0] = [a * k2 * cross(u2, v3), -a * k2 * dot(u2, v3)];
        }
        // n = 2
        if m >= 2 {
            let (k2, k3) = (self.k(2), self.k(3));
            let (u1, u3, v3, v4) = (at(u, 1), at(u, 3), at(v, 3), at(v, 4));
            out[1] = [
                a * k3 * cross(u3, v4) + b * k2 * cross(u1, v3),
                -a * k3 * dot(u3, v4) - b * k2 * dot(u1, v3),
            ];
        }
        // n > 2
        for n in 3..=m {
            let (up1, vp2) = (at(u, n + 1), at(v, n + 2));
            let (um1, vp1) = (u[n - 2], at(v, n + 1));
            let (vm2, um2, vm1) = (v[n - 3], u[n - 3], v[n - 2]);
            let (kp1, kn, km1) = (self.k(n + 1), self.k(n), self.k(n - 1));
            out[n - 1] = [
                a * kp1 * cross(up1, vp2)
                    + b * kn * cross(um1, vp1)
                    + a * km1 * (um1[1] * vm2[0] + um1[0] * vm2[1])
                    + b * km1 * (um2[1] * vm1[0] + um2[0] * vm1[1]),
                -a * kp1 * dot(up1, vp2)
                    - b * kn * dot(um1, vp1)
                    - a * km1 * (um1[0] * vm2[0] - um1[1] * vm2[1])
                    - b * km1 * (um2[0] * vm1[0] - um2[1] * vm1[1]),
            ];
        }
    }

    /// Row `n` of `B^m(x, x) - Π_m B(x, x)` from its closed form; zero unless
    /// `n ∈ {m-1, m}`. `x` must carry at least `m + 2` shells.
    pub(crate) fn tail_row(&self, x: &[[f64; 2]], m: usize, n: usize) -> [f64; 2] {
        let at = |j: usize| -> [f64; 2] {
            if j == 0 || j > x.len() {
                [0.0; 2]
            } else {
                x[j - 1]
            }
        };
        let (a, b) = (self.a, self.b);
        if n + 1 == m {
            let (xm, xm1) = (at(m), at(m + 1));
            let km = self.k(m);
            [
                -a * km * (xm[0] * xm1[1] - xm[1] * xm1[0]),
                -a * km * (-xm[0] * xm1[0] - xm[1] * xm1[1]),
            ]
        } else if n == m {
            let (xl, xp1, xp2) = (at(m - 1), at(m + 1), at(m + 2));
            let (km, kp1) = (self.k(m), self.k(m + 1));
            [
                -a * kp1 * (xp1[0] * xp2[1] - xp1[1] * xp2[0]) - b * km * (xl[0] * xp1[1] - xl[1] * xp1[0]),
                -a * kp1 * (-xp1[0] * xp2[0] - xp1[1] * xp2[1]) - b * km * (-xl[0] * xp1[0] - xl[1] * xp1[1]),
            ]
        } else {
            [0.0; 2]
        }
    }
}

fn check_coeffs(params: &SpectralParams, coeffs: &SabraCoefficients) -> Result<()> {
    if params.lambda() != coeffs.lambda {
        return Err(Error::Precondition(format!(
            "coefficient shell ratio {} differs from spectrum ratio {}",
            coeffs.lambda,
            params.lambda()
        )));
    }
    Ok(())
}

/// `B(u, v)` on the truncated spectrum of `u`.
pub fn evaluate_b(u: &ShellState, v: &ShellState, coeffs: &SabraCoefficients) -> Result<ShellState> {
    u.check_same(v)?;
    check_coeffs(u.params(), coeffs)?;
    let params = *u.params();
    let mut out = vec![[0.0; 2]; params.shells()];
    BKernel::new(&params, coeffs).apply(u.shells(), v.shells(), &mut out);
    ShellState::new(params, out)
}

/// `B^m(u, v) = Π_m B(Π_m u, Π_m v)`.
pub fn evaluate_b_galerkin(u: &ShellState, v: &ShellState, coeffs: &SabraCoefficients, m: usize) -> Result<ShellState> {
    let w = evaluate_b(&project(u, m)?, &project(v, m)?, coeffs)?;
    project(&w, m)
}

/// `B^m(x, x) - Π_m B(x, x)` from the explicit two-row closed form. Only
/// rows `m-1` and `m` can be nonzero.
pub fn tail_difference(x: &ShellState, coeffs: &SabraCoefficients, m: usize) -> Result<ShellState> {
    let params = *x.params();
    check_coeffs(&params, coeffs)?;
    if m == 0 || m + 2 > params.shells() {
        return Err(Error::Precondition(format!(
            "tail at level {m} needs 1 <= m and m + 2 <= {} shells",
            params.shells()
        )));
    }
    let kernel = BKernel::new(&params, coeffs);
    let mut out = vec![[0.0; 2]; params.shells()];
    for n in m.saturating_sub(1).max(1)..=m {
        out[n - 1] = kernel.tail_row(x.shells(), m, n);
    }
    ShellState::new(params, out)
}

/// `⟨B(u, v), w⟩` in `H`.
pub fn trilinear_form(u: &ShellState, v: &ShellState, w: &ShellState, coeffs: &SabraCoefficients) -> Result<f64> {
    evaluate_b(u, v, coeffs)?.dot(w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservationResiduals {
    /// `⟨B(u,u), u⟩`
    pub energy: f64,
    /// `⟨B(u,u), A^β u⟩`
    pub sbeta: f64,
}

pub fn conservation_residuals(u: &ShellState, coeffs: &SabraCoefficients) -> Result<ConservationResiduals> {
    let buu = evaluate_b(u, u, coeffs)?;
    Ok(ConservationResiduals {
        energy: buu.dot(u)?,
        sbeta: buu.dot(&apply_power(u, coeffs.beta))?,
    })
}

/// Scale `k_M^{1+2β} |u|³` against which the `S_β` residual is measured.
pub fn sbeta_residual_scale(u: &ShellState, coeffs: &SabraCoefficients) -> f64 {
    let k_top = u.params().wavenumber(u.params().shells());
    k_top.powf(1.0 + 2.0 * coeffs.beta) * u.norm().powi(3)
}
