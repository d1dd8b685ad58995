//! Sparse multivariate polynomials over `f64`.
//!
//! Terms are kept in a `BTreeMap` keyed by [`Monomial`] under graded
//! lexicographic order, so iteration and text output are deterministic.
//! Only exact zeros are pruned from storage; the text form hides
//! coefficients below [`DISPLAY_THRESHOLD`].

mod compiled;
mod parse;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use compiled::{CompiledField, CompiledPoly};
pub use parse::parse_polynomial;

/// Coefficients smaller than this are omitted from the text form.
pub const DISPLAY_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolyError {
    #[error("dimension mismatch: expected {expected} variables, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("parse error at column {column}: {message}")]
    Parse { column: usize, message: String },
}

/// Exponent vector `x1^a1 * ... * xn^an`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Monomial {
    exponents: Vec<u32>,
}

impl Monomial {
    pub fn new(exponents: Vec<u32>) -> Self {
        Self { exponents }
    }

    pub fn one(nvars: usize) -> Self {
        Self { exponents: vec![0; nvars] }
    }

    /// The monomial `x_i` (zero-based index).
    pub fn var(nvars: usize, i: usize) -> Self {
        let mut exponents = vec![0; nvars];
        exponents[i] = 1;
        Self { exponents }
    }

    pub fn nvars(&self) -> usize {
        self.exponents.len()
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exponents
    }

    pub fn exponent(&self, i: usize) -> u32 {
        self.exponents[i]
    }

    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }

    pub fn is_constant(&self) -> bool {
        self.exponents.iter().all(|&e| e == 0)
    }

    /// All exponents even, so the monomial is non-negative everywhere.
    pub fn is_even(&self) -> bool {
        self.exponents.iter().all(|&e| e % 2 == 0)
    }

    /// Number of variables with a positive exponent.
    pub fn support_len(&self) -> usize {
        self.exponents.iter().filter(|&&e| e > 0).count()
    }

    /// A power of a single variable, `x_i^k` with `k > 0`.
    pub fn pure_variable(&self) -> Option<usize> {
        if self.support_len() == 1 {
            self.exponents.iter().position(|&e| e > 0)
        } else {
            None
        }
    }

    pub fn is_mixed(&self) -> bool {
        self.support_len() >= 2
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        debug_assert_eq!(self.nvars(), other.nvars());
        Monomial {
            exponents: self
                .exponents
                .iter()
                .zip(&other.exponents)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    /// Exponent-wise doubling, i.e. `m * m`.
    pub fn squared(&self) -> Monomial {
        self.mul(self)
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.exponents
            .iter()
            .zip(x)
            .map(|(&e, &xi)| xi.powi(e as i32))
            .product()
    }

    /// Derivative with respect to `x_i`: returns the multiplier and the
    /// lowered monomial, or `None` when the exponent is zero.
    pub fn derivative(&self, i: usize) -> Option<(u32, Monomial)> {
        let e = self.exponents[i];
        if e == 0 {
            return None;
        }
        let mut lowered = self.clone();
        lowered.exponents[i] -= 1;
        Some((e, lowered))
    }

    /// Embed into a space with `extra` additional trailing variables.
    pub fn extend(&self, extra: usize) -> Monomial {
        let mut exponents = self.exponents.clone();
        exponents.extend(std::iter::repeat_n(0, extra));
        Monomial { exponents }
    }

    /// Enumerates every monomial in `nvars` variables of total degree at
    /// most `max_degree`, ascending in graded lexicographic order.
    pub fn all_up_to(nvars: usize, max_degree: u32) -> Vec<Monomial> {
        let mut out = Vec::new();
        let mut current = vec![0u32; nvars];
        fn rec(i: usize, left: u32, current: &mut Vec<u32>, out: &mut Vec<Monomial>) {
            if i == current.len() {
                out.push(Monomial::new(current.clone()));
                return;
            }
            for e in 0..=left {
                current[i] = e;
                rec(i + 1, left - e, current, out);
            }
            current[i] = 0;
        }
        rec(0, max_degree, &mut current, &mut out);
        out.sort();
        out
    }
}

impl Ord for Monomial {
    /// Graded lexicographic: total degree first, then a larger power of an
    /// earlier variable ranks higher.
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| self.exponents.cmp(&other.exponents))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_constant() {
            return write!(f, "1");
        }
        let mut first = true;
        for (i, &e) in self.exponents.iter().enumerate() {
            if e == 0 {
                continue;
            }
            if !first {
                write!(f, "*")?;
            }
            first = false;
            if e == 1 {
                write!(f, "x{}", i + 1)?;
            } else {
                write!(f, "x{}^{}", i + 1, e)?;
            }
        }
        Ok(())
    }
}

/// A real polynomial in a fixed number of variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<Monomial, f64>,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Self { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        Self::monomial(Monomial::one(nvars), c)
    }

    pub fn var(nvars: usize, i: usize) -> Self {
        Self::monomial(Monomial::var(nvars, i), 1.0)
    }

    pub fn monomial(m: Monomial, c: f64) -> Self {
        let mut p = Self::zero(m.nvars());
        p.add_term(m, c);
        p
    }

    /// Builds a polynomial from `(monomial, coefficient)` pairs, summing
    /// repeated monomials.
    pub fn from_terms<I>(nvars: usize, terms: I) -> Result<Self, PolyError>
    where
        I: IntoIterator<Item = (Monomial, f64)>,
    {
        let mut p = Self::zero(nvars);
        for (m, c) in terms {
            if m.nvars() != nvars {
                return Err(PolyError::DimensionMismatch { expected: nvars, found: m.nvars() });
            }
            p.add_term(m, c);
        }
        Ok(p)
    }

    /// Adds `c * m` in place, dropping the term if it cancels exactly.
    pub fn add_term(&mut self, m: Monomial, c: f64) {
        debug_assert_eq!(m.nvars(), self.nvars);
        if c == 0.0 {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let sum = *o.get() + c;
                if sum == 0.0 {
                    o.remove();
                } else {
                    *o.get_mut() = sum;
                }
            }
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms in ascending graded lexicographic order.
    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn monomials(&self) -> impl Iterator<Item = &Monomial> {
        self.terms.keys()
    }

    pub fn coefficient(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn constant_term(&self) -> f64 {
        self.coefficient(&Monomial::one(self.nvars))
    }

    /// Total degree, `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(Monomial::degree).max()
    }

    /// Largest coefficient magnitude (the coefficient ∞-norm).
    pub fn max_abs_coefficient(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a.max(c.abs()))
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64, PolyError> {
        self.check_point(x)?;
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(m, c)| c * m.evaluate(x)).sum()
    }

    fn check_point(&self, x: &[f64]) -> Result<(), PolyError> {
        if x.len() != self.nvars {
            return Err(PolyError::DimensionMismatch { expected: self.nvars, found: x.len() });
        }
        Ok(())
    }

    fn check_same(&self, other: &Polynomial) -> Result<(), PolyError> {
        if self.nvars != other.nvars {
            return Err(PolyError::DimensionMismatch { expected: self.nvars, found: other.nvars });
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_same(other)?;
        let mut out = self.clone();
        for (m, &c) in &other.terms {
            out.add_term(m.clone(), c);
        }
        Ok(out)
    }

    pub fn try_sub(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_same(other)?;
        let mut out = self.clone();
        for (m, &c) in &other.terms {
            out.add_term(m.clone(), -c);
        }
        Ok(out)
    }

    pub fn try_mul(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_same(other)?;
        let mut out = Polynomial::zero(self.nvars);
        for (ma, &ca) in &self.terms {
            for (mb, &cb) in &other.terms {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        if s == 0.0 {
            return Polynomial::zero(self.nvars);
        }
        Polynomial {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(m, &c)| (m.clone(), c * s)).collect(),
        }
    }

    pub fn pow(&self, k: u32) -> Polynomial {
        let mut out = Polynomial::constant(self.nvars, 1.0);
        for _ in 0..k {
            out = &out * self;
        }
        out
    }

    /// Partial derivative with respect to `x_i` (zero-based).
    pub fn derivative(&self, i: usize) -> Polynomial {
        let mut out = Polynomial::zero(self.nvars);
        for (m, &c) in &self.terms {
            if let Some((e, lowered)) = m.derivative(i) {
                out.add_term(lowered, c * e as f64);
            }
        }
        out
    }

    pub fn gradient(&self) -> VectorField {
        VectorField {
            nvars: self.nvars,
            components: (0..self.nvars).map(|i| self.derivative(i)).collect(),
        }
    }

    /// Drops every term whose coefficient magnitude is below `tol`.
    pub fn pruned(&self, tol: f64) -> Polynomial {
        Polynomial {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .filter(|(_, c)| c.abs() >= tol)
                .map(|(m, &c)| (m.clone(), c))
                .collect(),
        }
    }

    /// Embeds into a space with `extra` additional trailing variables.
    pub fn extend(&self, extra: usize) -> Polynomial {
        Polynomial {
            nvars: self.nvars + extra,
            terms: self.terms.iter().map(|(m, &c)| (m.extend(extra), c)).collect(),
        }
    }

    /// Mean of the polynomial over the tensor grid whose `i`-th axis is
    /// `axes[i]`. Evaluated exactly through per-axis power moments, so the
    /// cost does not grow with the number of grid points.
    pub fn grid_mean(&self, axes: &[Vec<f64>]) -> Result<f64, PolyError> {
        if axes.len() != self.nvars {
            return Err(PolyError::DimensionMismatch { expected: self.nvars, found: axes.len() });
        }
        let max_exp = self
            .terms
            .keys()
            .flat_map(|m| m.exponents.iter().copied())
            .max()
            .unwrap_or(0) as usize;
        let moments: Vec<Vec<f64>> = axes
            .iter()
            .map(|axis| {
                (0..=max_exp)
                    .map(|k| axis.iter().map(|v| v.powi(k as i32)).sum::<f64>() / axis.len() as f64)
                    .collect()
            })
            .collect();
        Ok(self
            .terms
            .iter()
            .map(|(m, c)| {
                c * m
                    .exponents
                    .iter()
                    .enumerate()
                    .map(|(i, &e)| moments[i][e as usize])
                    .product::<f64>()
            })
            .sum())
    }
}

impl fmt::Display for Polynomial {
    /// Signed terms `c * x1^a1*x2^a2`, highest graded-lex term first.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (m, c) in self.terms.iter().rev() {
            if c.abs() < DISPLAY_THRESHOLD {
                continue;
            }
            let mag = c.abs();
            match (first, *c < 0.0) {
                (true, true) => write!(f, "-")?,
                (true, false) => {}
                (false, true) => write!(f, " - ")?,
                (false, false) => write!(f, " + ")?,
            }
            if m.is_constant() {
                write!(f, "{mag}")?;
            } else {
                write!(f, "{mag} * {m}")?;
            }
            first = false;
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for Polynomial {
    type Err = PolyError;

    /// Parses with the number of variables inferred from the highest `xk`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let n = parse::infer_nvars(s);
        parse_polynomial(s, n)
    }
}

macro_rules! forward_binop {
    ($trait:ident, $method:ident, $try:ident) => {
        impl $trait<&Polynomial> for &Polynomial {
            type Output = Polynomial;
            fn $method(self, rhs: &Polynomial) -> Polynomial {
                self.$try(rhs).expect("polynomial dimension mismatch")
            }
        }
        impl $trait<Polynomial> for Polynomial {
            type Output = Polynomial;
            fn $method(self, rhs: Polynomial) -> Polynomial {
                (&self).$method(&rhs)
            }
        }
    };
}

forward_binop!(Add, add, try_add);
forward_binop!(Sub, sub, try_sub);
forward_binop!(Mul, mul, try_mul);

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

impl Neg for Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

/// A polynomial vector field `f: R^n -> R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    nvars: usize,
    components: Vec<Polynomial>,
}

impl VectorField {
    pub fn new(components: Vec<Polynomial>) -> Result<Self, PolyError> {
        let nvars = components.len();
        for c in &components {
            if c.nvars() != nvars {
                return Err(PolyError::DimensionMismatch { expected: nvars, found: c.nvars() });
            }
        }
        Ok(Self { nvars, components })
    }

    pub fn zero(nvars: usize) -> Self {
        Self { nvars, components: vec![Polynomial::zero(nvars); nvars] }
    }

    /// The linear field `x -> A x`.
    pub fn linear(a: &DMatrix<f64>) -> Self {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "linear drift needs a square matrix");
        let components = (0..n)
            .map(|i| {
                let mut p = Polynomial::zero(n);
                for j in 0..n {
                    p.add_term(Monomial::var(n, j), a[(i, j)]);
                }
                p
            })
            .collect();
        Self { nvars: n, components }
    }

    /// The matrix `A` when every component is a homogeneous linear form.
    pub fn as_linear(&self) -> Option<DMatrix<f64>> {
        let n = self.nvars;
        let mut a = DMatrix::zeros(n, n);
        for (i, c) in self.components.iter().enumerate() {
            for (m, coef) in c.terms() {
                if m.degree() != 1 {
                    return None;
                }
                let j = m.pure_variable()?;
                a[(i, j)] = coef;
            }
        }
        Some(a)
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn components(&self) -> &[Polynomial] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &Polynomial {
        &self.components[i]
    }

    pub fn max_degree(&self) -> Option<u32> {
        self.components.iter().filter_map(Polynomial::degree).max()
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(Polynomial::is_zero)
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>, PolyError> {
        if x.len() != self.nvars {
            return Err(PolyError::DimensionMismatch { expected: self.nvars, found: x.len() });
        }
        Ok(self.components.iter().map(|c| c.eval_unchecked(x)).collect())
    }

    /// `Σ_i a_i b_i`.
    pub fn dot(&self, other: &VectorField) -> Result<Polynomial, PolyError> {
        if self.nvars != other.nvars {
            return Err(PolyError::DimensionMismatch { expected: self.nvars, found: other.nvars });
        }
        let mut out = Polynomial::zero(self.nvars);
        for (a, b) in self.components.iter().zip(&other.components) {
            out = &out + &(a * b);
        }
        Ok(out)
    }

    pub fn norm_squared(&self) -> Polynomial {
        self.dot(self).expect("same field")
    }

    pub fn try_add(&self, other: &VectorField) -> Result<VectorField, PolyError> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn try_sub(&self, other: &VectorField) -> Result<VectorField, PolyError> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(
        &self,
        other: &VectorField,
        op: impl Fn(&Polynomial, &Polynomial) -> Polynomial,
    ) -> Result<VectorField, PolyError> {
        if self.nvars != other.nvars {
            return Err(PolyError::DimensionMismatch { expected: self.nvars, found: other.nvars });
        }
        Ok(VectorField {
            nvars: self.nvars,
            components: self.components.iter().zip(&other.components).map(|(a, b)| op(a, b)).collect(),
        })
    }

    pub fn scale(&self, s: f64) -> VectorField {
        VectorField {
            nvars: self.nvars,
            components: self.components.iter().map(|c| c.scale(s)).collect(),
        }
    }

    /// Row `i` holds the gradient of component `i`.
    pub fn jacobian(&self) -> Vec<VectorField> {
        self.components.iter().map(Polynomial::gradient).collect()
    }

    pub fn compile(&self) -> CompiledField {
        CompiledField::new(self)
    }
}

impl fmt::Display for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, c) in self.components.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str, n: usize) -> Polynomial {
        parse_polynomial(s, n).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        assert_eq!(p("x1^4/4 - x1^2/2", 1).evaluate(&[1.0]).unwrap(), -0.25);
        assert_eq!(p("1", 3).evaluate(&[0.3, -2.0, 9.0]).unwrap(), 1.0);
        assert_eq!(p("x1*x2", 2).evaluate(&[2.0, 3.0]).unwrap(), 6.0);
        assert!(matches!(
            p("x1*x2", 2).evaluate(&[1.0]),
            Err(PolyError::DimensionMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn gradient_examples() {
        let g = p("0.25*x1^4 - 0.5*x1^2", 1).gradient();
        assert_eq!(g.component(0), &p("x1^3 - x1", 1));
        let g = p("x1*x2", 2).gradient();
        assert_eq!(g.components(), &[p("x2", 2), p("x1", 2)]);
        assert!(Polynomial::constant(3, 4.0).gradient().is_zero());
    }

    #[test]
    fn dot_examples() {
        let a = p("0.5*x1^2", 1).gradient();
        let b = VectorField::new(vec![p("-x1", 1)]).unwrap();
        assert_eq!(a.dot(&b).unwrap(), p("-x1^2", 1));

        let rot = VectorField::new(vec![p("x2", 2), p("-x1", 2)]).unwrap();
        let id = VectorField::new(vec![p("x1", 2), p("x2", 2)]).unwrap();
        assert!(rot.dot(&id).unwrap().is_zero());

        let c = VectorField::new(vec![p("x1^3 - x1", 1)]).unwrap();
        assert_eq!(c.dot(&c).unwrap(), p("x1^6 - 2*x1^4 + x1^2", 1));

        assert!(rot.dot(&VectorField::zero(3)).is_err());
    }

    #[test]
    fn arithmetic_examples() {
        assert_eq!(p("x1^2 + 1", 1) + p("-x1^2", 1), Polynomial::constant(1, 1.0));
        assert_eq!(p("x1*x2", 2).scale(2.0), p("2*x1*x2", 2));
        assert_eq!(p("x1 + 1", 1) * p("x1 - 1", 1), p("x1^2 - 1", 1));
        assert!((p("x1", 1) - p("x1", 1)).is_empty());
        assert!(p("x1", 1).try_add(&p("x1", 2)).is_err());
    }

    #[test]
    fn product_degree_adds() {
        let a = p("x1^3 + x2", 2);
        let b = p("x1*x2^2 - 4", 2);
        assert_eq!((&a * &b).degree(), Some(6));
    }

    #[test]
    fn grlex_order() {
        let a = Monomial::new(vec![2, 0]);
        let b = Monomial::new(vec![1, 1]);
        let c = Monomial::new(vec![0, 3]);
        assert!(a > b);
        assert!(c > a);
        assert_eq!(Monomial::all_up_to(2, 2).len(), 6);
    }

    #[test]
    fn display_form() {
        let u = p("0.5*x1^4 + 0.5*x2^4 - 5*x1^2 - 5*x2^2 + x1*x2 + x1", 2);
        assert_eq!(
            u.to_string(),
            "0.5 * x1^4 + 0.5 * x2^4 - 5 * x1^2 + 1 * x1*x2 - 5 * x2^2 + 1 * x1"
        );
        assert_eq!(Polynomial::zero(2).to_string(), "0");
        assert_eq!(p("1e-12*x1 + 3", 1).to_string(), "3");
    }

    #[test]
    fn grid_mean_matches_enumeration() {
        let q = p("x1^2*x2 - 3*x2^4 + x1 + 2", 2);
        let axis: Vec<f64> = (0..7).map(|k| -2.0 + 4.0 * k as f64 / 6.0).collect();
        let axes = vec![axis.clone(), axis.clone()];
        let mut brute = 0.0;
        for a in &axis {
            for b in &axis {
                brute += q.evaluate(&[*a, *b]).unwrap();
            }
        }
        brute /= 49.0;
        assert!((q.grid_mean(&axes).unwrap() - brute).abs() < 1e-12);
    }

    #[test]
    fn linear_round_trip() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, -3.0]);
        let f = VectorField::linear(&a);
        assert_eq!(f.as_linear().unwrap(), a);
        let g = VectorField::new(vec![p("x1^2", 2), p("x2", 2)]).unwrap();
        assert!(g.as_linear().is_none());
    }
}
