//! Exact Gaussian moments of the nonlinearity and of its Galerkin tail.

use crate::error::{Error, Result};
use crate::sabra::{BKernel, SabraCoefficients};
use crate::space::SpectralParams;

use super::poly::{CylindricalPolynomial, Monomial, Var};
use super::wick::diagonal_expectation;
use super::MeasureParams;

fn check_consistent(coeffs: &SabraCoefficients, params: &MeasureParams) -> Result<()> {
    if coeffs.lambda() != params.spectral().lambda() {
        return Err(Error::Precondition(format!(
            "coefficient shell ratio {} differs from spectrum ratio {}",
            coeffs.lambda(),
            params.spectral().lambda()
        )));
    }
    if (coeffs.beta() - params.beta()).abs() > 1e-12 * params.beta().max(1.0) {
        return Err(Error::Precondition(format!(
            "coefficient β = {} differs from measure β = {}",
            coeffs.beta(),
            params.beta()
        )));
    }
    Ok(())
}

/// Recovers the coefficients of a homogeneous quadratic map `R^{2S} → R^{rows×2}`
/// from its values on basis vectors and their pairwise sums.
fn polarize<F>(vars: usize, rows: usize, mut quad: F) -> Vec<[CylindricalPolynomial; 2]>
where
    F: FnMut(&[[f64; 2]]) -> Vec<[f64; 2]>,
{
    let shells = vars / 2;
    let basis = |idx: &[usize]| {
        let mut x = vec![[0.0; 2]; shells];
        for &i in idx {
            x[i / 2][i % 2] += 1.0;
        }
        x
    };
    let diag: Vec<Vec<[f64; 2]>> = (0..vars).map(|i| quad(&basis(&[i]))).collect();
    let mut out: Vec<[CylindricalPolynomial; 2]> = (0..rows).map(|_| Default::default()).collect();
    for p in 0..vars {
        let vp = Var::from_flat_index(p);
        for (r, row) in out.iter_mut().enumerate() {
            for c in 0..2 {
                row[c].add_term(diag[p][r][c], Monomial::new([(vp, 2)]));
            }
        }
        for q in p + 1..vars {
            let vq = Var::from_flat_index(q);
            let both = quad(&basis(&[p, q]));
            for (r, row) in out.iter_mut().enumerate() {
                for c in 0..2 {
                    let coef = both[r][c] - diag[p][r][c] - diag[q][r][c];
                    row[c].add_term(coef, Monomial::new([(vp, 1), (vq, 1)]));
                }
            }
        }
    }
    out
}

/// `B_n(x, x)` as a pair of quadratic polynomials. The row is resolved on a
/// spectrum wide enough (`n + 2` shells at least) to include every shell it
/// couples to.
pub fn symbolic_b_row(
    coeffs: &SabraCoefficients,
    spectral: &SpectralParams,
    n: usize,
) -> Result<[CylindricalPolynomial; 2]> {
    if n == 0 {
        return Err(Error::Precondition("shell indices start at 1".into()));
    }
    let wide = spectral.with_shells(spectral.shells().max(n + 2))?;
    let kernel = BKernel::new(&wide, coeffs);
    let shells = wide.shells();
    let mut rows = polarize(2 * shells, 1, |x| {
        let mut out = vec![[0.0; 2]; shells];
        kernel.apply(x, x, &mut out);
        vec![out[n - 1]]
    });
    Ok(rows.pop().expect("one row"))
}

/// Rows `m-1` and `m` of `B^m(x,x) - B(x,x)` as quadratic polynomials.
pub fn symbolic_tail_rows(
    coeffs: &SabraCoefficients,
    spectral: &SpectralParams,
    m: usize,
) -> Result<Vec<[CylindricalPolynomial; 2]>> {
    if m < 2 {
        return Err(Error::Precondition(format!("tail level {m} must be >= 2")));
    }
    let wide = spectral.with_shells(m + 2)?;
    let kernel = BKernel::new(&wide, coeffs);
    Ok(polarize(2 * (m + 2), 2, |x| {
        vec![kernel.tail_row(x, m, m - 1), kernel.tail_row(x, m, m)]
    }))
}

/// `∫ |B_{n,i}(x,x)|² μ(dx)` in closed form.
///
/// `B_{n,i}(x,x)` splits into at most three groups (coupling shells
/// `(n+1, n+2)`, `(n-1, n+1)` and `(n-2, n-1)`) with coefficients `a k_{n+1}`,
/// `b k_n` and `(a+b) k_{n-1}`. Each group is a sum of two products of
/// distinct independent components, and products from different groups
/// always contain an unpaired factor, so only the diagonal survives:
/// `E = 2 Σ_g c_g² σ²_p σ²_q`. Groups referring to shell 0 or below are
/// absent. Shells above the truncation are included: this is the moment of the
/// untruncated nonlinearity.
pub fn expected_b_component_square(
    coeffs: &SabraCoefficients,
    params: &MeasureParams,
    n: usize,
    component: usize,
) -> Result<f64> {
    check_consistent(coeffs, params)?;
    if n == 0 || !(component == 1 || component == 2) {
        return Err(Error::Precondition(format!(
            "component ({n}, {component}) outside n >= 1, i in {{1, 2}}"
        )));
    }
    let sp = params.spectral();
    let (a, b) = (coeffs.a(), coeffs.b());
    let var = |j: usize| params.variance(j);
    let mut total = (a * sp.wavenumber(n + 1)).powi(2) * var(n + 1) * var(n + 2);
    if n >= 2 {
        total += (b * sp.wavenumber(n)).powi(2) * var(n - 1) * var(n + 1);
    }
    if n >= 3 {
        total += ((a + b) * sp.wavenumber(n - 1)).powi(2) * var(n - 1) * var(n - 2);
    }
    Ok(2.0 * total)
}

/// `∫ (|B_n(x,x)|²)^power μ(dx)` by Wick pairing over the symbolic row.
pub fn b_moment(coeffs: &SabraCoefficients, params: &MeasureParams, n: usize, power: u32) -> Result<f64> {
    check_consistent(coeffs, params)?;
    let [r1, r2] = symbolic_b_row(coeffs, params.spectral(), n)?;
    let sq = r1.mul(&r1).add(&r2.mul(&r2));
    let mut p = CylindricalPolynomial::constant(1.0);
    for _ in 0..power {
        p = p.mul(&sq);
    }
    diagonal_expectation(&p, |v| params.variance(v.shell))
}

/// `Σ_{n=1}^{m} ∫ |B^m_n(x,x) - B_n(x,x)|² μ(dx)`, evaluated by Wick pairing
/// on the two nonzero tail rows.
pub fn expected_tail_norm(coeffs: &SabraCoefficients, params: &MeasureParams, m: usize) -> Result<f64> {
    check_consistent(coeffs, params)?;
    let rows = symbolic_tail_rows(coeffs, params.spectral(), m)?;
    let mut total = 0.0;
    for row in &rows {
        for comp in row {
            total += diagonal_expectation(&comp.mul(comp), |v| params.variance(v.shell))?;
        }
    }
    Ok(total)
}

/// Partial sum `Σ_{n=1}^{N} λ_n^α ∫ |B_n(x,x)|² μ(dx)` of the second moment of
/// `‖B(x,x)‖_α`.
pub fn expected_b_sobolev_norm_sq(
    coeffs: &SabraCoefficients,
    params: &MeasureParams,
    alpha: f64,
    terms: usize,
) -> Result<f64> {
    let mut total = 0.0;
    for n in 1..=terms {
        let e = expected_b_component_square(coeffs, params, n, 1)? + expected_b_component_square(coeffs, params, n, 2)?;
        total += params.spectral().eigenvalue(n).powf(alpha) * e;
    }
    Ok(total)
}
