//! Gaussian moments by Isserlis/Wick pairing enumeration.
//!
//! `E[x_{v1} ... x_{v2k}]` for a centred Gaussian vector is the sum over all
//! perfect matchings of the factors of the product of pair covariances. The
//! enumeration is brute force, which is fine for the degree ≤ 8 moments the
//! toolkit needs (at most 105 matchings per monomial).

use crate::error::{Error, Result};

use super::poly::{CylindricalPolynomial, Monomial, Var};

/// Highest monomial degree accepted (10395 matchings).
pub const MAX_WICK_DEGREE: u32 = 12;

fn matchings<C: Fn(Var, Var) -> f64>(factors: &mut Vec<Var>, cov: &C) -> f64 {
    let Some(first) = factors.pop() else {
        return 1.0;
    };
    let mut total = 0.0;
    for j in 0..factors.len() {
        let c = cov(first, factors[j]);
        if c == 0.0 {
            continue;
        }
        let partner = factors.swap_remove(j);
        total += c * matchings(factors, cov);
        factors.push(partner);
        let last = factors.len() - 1;
        factors.swap(j, last);
    }
    factors.push(first);
    total
}

/// `E[m(x)]` for a centred Gaussian with covariance `cov`.
pub fn monomial_expectation<C: Fn(Var, Var) -> f64>(m: &Monomial, cov: &C) -> Result<f64> {
    let degree = m.degree();
    if degree > MAX_WICK_DEGREE {
        return Err(Error::DegreeTooHigh(degree));
    }
    if degree % 2 == 1 {
        return Ok(0.0);
    }
    let mut factors = m.expanded();
    Ok(matchings(&mut factors, cov))
}

/// `E[p(x)]` for a centred Gaussian with covariance `cov`.
pub fn expectation<C: Fn(Var, Var) -> f64>(p: &CylindricalPolynomial, cov: &C) -> Result<f64> {
    p.terms()
        .map(|(m, c)| monomial_expectation(m, cov).map(|e| c * e))
        .sum()
}

/// `E[p(x)]` for independent centred components with the given variances.
pub fn diagonal_expectation<F: Fn(Var) -> f64>(p: &CylindricalPolynomial, var: F) -> Result<f64> {
    expectation(p, &|u, v| if u == v { var(u) } else { 0.0 })
}
