//! Cylindrical polynomials: finite polynomials in the shell components.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::ShellState;

/// Component `x_{shell, comp}` with `shell ≥ 1` and `comp ∈ {1, 2}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Var {
    pub shell: usize,
    pub comp: usize,
}

impl Var {
    pub fn new(shell: usize, comp: usize) -> Result<Self> {
        if shell == 0 || !(comp == 1 || comp == 2) {
            return Err(Error::Precondition(format!(
                "component index ({shell}, {comp}) outside n >= 1, i in {{1, 2}}"
            )));
        }
        Ok(Var { shell, comp })
    }

    /// Position in the flat ordering `x_{1,1}, x_{1,2}, x_{2,1}, ...`.
    pub fn flat_index(&self) -> usize {
        2 * (self.shell - 1) + (self.comp - 1)
    }

    pub fn from_flat_index(i: usize) -> Self {
        Var {
            shell: i / 2 + 1,
            comp: i % 2 + 1,
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{},{}", self.shell, self.comp)
    }
}

/// Sorted list of `(variable, exponent)` with positive exponents.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Monomial(Vec<(Var, u32)>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn new(factors: impl IntoIterator<Item = (Var, u32)>) -> Self {
        let mut map = BTreeMap::new();
        for (v, e) in factors {
            *map.entry(v).or_insert(0) += e;
        }
        Monomial(map.into_iter().filter(|&(_, e)| e > 0).collect())
    }

    pub fn factors(&self) -> &[(Var, u32)] {
        &self.0
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&(_, e)| e).sum()
    }

    pub fn exponent(&self, v: Var) -> u32 {
        self.0.iter().find(|(w, _)| *w == v).map_or(0, |&(_, e)| e)
    }

    fn mul(&self, other: &Monomial) -> Monomial {
        Monomial::new(self.0.iter().chain(&other.0).copied())
    }

    pub fn evaluate(&self, x: &ShellState) -> f64 {
        self.0
            .iter()
            .map(|&(v, e)| x.component(v.shell, v.comp).powi(e as i32))
            .product()
    }

    /// Flattened factor list, each variable repeated by its exponent.
    pub fn expanded(&self) -> Vec<Var> {
        self.0
            .iter()
            .flat_map(|&(v, e)| std::iter::repeat_n(v, e as usize))
            .collect()
    }
}

/// A finite linear combination of monomials in the shell components.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CylindricalPolynomial {
    terms: BTreeMap<Monomial, f64>,
}

impl CylindricalPolynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self::zero().with_term(c, Monomial::one())
    }

    pub fn var(v: Var) -> Self {
        Self::zero().with_term(1.0, Monomial::new([(v, 1)]))
    }

    /// Builds a polynomial from `(coefficient, [(shell, comp, exponent)])` terms.
    pub fn from_terms<I, F>(terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, F)>,
        F: IntoIterator<Item = (usize, usize, u32)>,
    {
        let mut p = Self::zero();
        for (c, factors) in terms {
            let factors = factors
                .into_iter()
                .map(|(n, i, e)| Var::new(n, i).map(|v| (v, e)))
                .collect::<Result<Vec<_>>>()?;
            p.add_term(c, Monomial::new(factors));
        }
        Ok(p)
    }

    fn with_term(mut self, c: f64, m: Monomial) -> Self {
        self.add_term(c, m);
        self
    }

    pub fn add_term(&mut self, c: f64, m: Monomial) {
        if c == 0.0 {
            return;
        }
        let entry = self.terms.entry(m).or_insert(0.0);
        *entry += c;
        if *entry == 0.0 {
            self.terms.retain(|_, c| *c != 0.0);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    /// Largest shell index appearing in any term (0 for constants).
    pub fn max_shell(&self) -> usize {
        self.vars().map(|v| v.shell).max().unwrap_or(0)
    }

    /// Distinct variables in the polynomial, sorted.
    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        let mut vs: Vec<Var> = self
            .terms
            .keys()
            .flat_map(|m| m.factors().iter().map(|&(v, _)| v))
            .collect();
        vs.sort();
        vs.dedup();
        vs.into_iter()
    }

    pub fn contains_var(&self, v: Var) -> bool {
        self.terms.keys().any(|m| m.exponent(v) > 0)
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut p = Self::zero();
        for (m, a) in self.terms() {
            p.add_term(c * a, m.clone());
        }
        p
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut p = self.clone();
        for (m, c) in other.terms() {
            p.add_term(c, m.clone());
        }
        p
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut p = Self::zero();
        for (m1, c1) in self.terms() {
            for (m2, c2) in other.terms() {
                p.add_term(c1 * c2, m1.mul(m2));
            }
        }
        p
    }

    pub fn derivative(&self, v: Var) -> Self {
        let mut p = Self::zero();
        for (m, c) in self.terms() {
            let e = m.exponent(v);
            if e == 0 {
                continue;
            }
            let reduced = Monomial::new(
                m.factors()
                    .iter()
                    .map(|&(w, f)| if w == v { (w, f - 1) } else { (w, f) }),
            );
            p.add_term(c * e as f64, reduced);
        }
        p
    }

    pub fn evaluate(&self, x: &ShellState) -> f64 {
        self.terms().map(|(m, c)| c * m.evaluate(x)).sum()
    }
}

impl fmt::Display for CylindricalPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return write!(f, "0");
        }
        for (k, (m, c)) in self.terms().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{c}")?;
            for (v, e) in m.factors() {
                if *e == 1 {
                    write!(f, "·{v}")?;
                } else {
                    write!(f, "·{v}^{e}")?;
                }
            }
        }
        Ok(())
    }
}
