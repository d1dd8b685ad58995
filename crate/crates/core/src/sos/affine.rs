//! Polynomials whose coefficients are affine in the decision variables.

use std::collections::BTreeMap;
use std::ops::{Add, Neg, Sub};

use crate::poly::{Monomial, Polynomial};

/// Identifier of a scalar decision variable inside one [`super::SosProgram`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub(crate) usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// `constant + Σ coeff_k * var_k`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AffineExpr {
    pub constant: f64,
    pub coeffs: BTreeMap<VarId, f64>,
}

impl AffineExpr {
    pub fn constant(c: f64) -> Self {
        Self { constant: c, coeffs: BTreeMap::new() }
    }

    pub fn var(v: VarId) -> Self {
        Self::term(v, 1.0)
    }

    pub fn term(v: VarId, c: f64) -> Self {
        let mut e = Self::default();
        e.add_var(v, c);
        e
    }

    pub fn add_var(&mut self, v: VarId, c: f64) {
        if c == 0.0 {
            return;
        }
        let slot = self.coeffs.entry(v).or_insert(0.0);
        *slot += c;
        if *slot == 0.0 {
            self.coeffs.remove(&v);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.coeffs.is_empty()
    }

    pub fn scale(&self, s: f64) -> Self {
        if s == 0.0 {
            return Self::default();
        }
        Self {
            constant: self.constant * s,
            coeffs: self.coeffs.iter().map(|(&v, &c)| (v, c * s)).collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &AffineExpr, s: f64) {
        self.constant += other.constant * s;
        for (&v, &c) in &other.coeffs {
            self.add_var(v, c * s);
        }
    }

    pub fn evaluate(&self, values: &[f64]) -> f64 {
        self.constant + self.coeffs.iter().map(|(v, c)| c * values[v.0]).sum::<f64>()
    }
}

impl Add<&AffineExpr> for &AffineExpr {
    type Output = AffineExpr;
    fn add(self, rhs: &AffineExpr) -> AffineExpr {
        let mut out = self.clone();
        out.add_scaled(rhs, 1.0);
        out
    }
}

/// Polynomial in the state variables with [`AffineExpr`] coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePoly {
    nvars: usize,
    terms: BTreeMap<Monomial, AffineExpr>,
}

impl AffinePoly {
    pub fn zero(nvars: usize) -> Self {
        Self { nvars, terms: BTreeMap::new() }
    }

    pub fn from_poly(p: &Polynomial) -> Self {
        let mut out = Self::zero(p.nvars());
        for (m, c) in p.terms() {
            out.add_term(m.clone(), &AffineExpr::constant(c));
        }
        out
    }

    /// `Σ_k var_k * m_k`, the usual parameterized-polynomial ansatz.
    pub fn linear_combination(nvars: usize, terms: &[(Monomial, VarId)]) -> Self {
        let mut out = Self::zero(nvars);
        for (m, v) in terms {
            out.add_term(m.clone(), &AffineExpr::var(*v));
        }
        out
    }

    pub fn add_term(&mut self, m: Monomial, e: &AffineExpr) {
        debug_assert_eq!(m.nvars(), self.nvars);
        let slot = self.terms.entry(m.clone()).or_default();
        slot.add_scaled(e, 1.0);
        if slot.is_zero() {
            self.terms.remove(&m);
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &AffineExpr)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, m: &Monomial) -> Option<&AffineExpr> {
        self.terms.get(m)
    }

    /// Monomials whose coefficient is not identically zero.
    pub fn support(&self) -> impl Iterator<Item = &Monomial> {
        self.terms.keys()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(Monomial::degree).max()
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = Self::zero(self.nvars);
        for (m, e) in &self.terms {
            out.add_term(m.clone(), &e.scale(s));
        }
        out
    }

    pub fn mul_poly(&self, p: &Polynomial) -> Self {
        assert_eq!(self.nvars, p.nvars(), "dimension mismatch");
        let mut out = Self::zero(self.nvars);
        for (ma, e) in &self.terms {
            for (mb, c) in p.terms() {
                out.add_term(ma.mul(mb), &e.scale(c));
            }
        }
        out
    }

    /// `v * p` for a fixed polynomial `p`.
    pub fn poly_times_var(p: &Polynomial, v: VarId) -> Self {
        let mut out = Self::zero(p.nvars());
        for (m, c) in p.terms() {
            out.add_term(m.clone(), &AffineExpr::term(v, c));
        }
        out
    }

    pub fn derivative(&self, i: usize) -> Self {
        let mut out = Self::zero(self.nvars);
        for (m, e) in &self.terms {
            if let Some((k, lowered)) = m.derivative(i) {
                out.add_term(lowered, &e.scale(k as f64));
            }
        }
        out
    }

    pub fn gradient(&self) -> Vec<AffinePoly> {
        (0..self.nvars).map(|i| self.derivative(i)).collect()
    }

    /// `Σ_i a_i * f_i` for affine `a` and fixed polynomials `f`.
    pub fn dot_polys(a: &[AffinePoly], f: &[Polynomial]) -> Self {
        assert_eq!(a.len(), f.len());
        let n = a.first().map(|x| x.nvars).unwrap_or(0);
        let mut out = Self::zero(n);
        for (ai, fi) in a.iter().zip(f) {
            out = &out + &ai.mul_poly(fi);
        }
        out
    }

    pub fn extend(&self, extra: usize) -> Self {
        Self {
            nvars: self.nvars + extra,
            terms: self.terms.iter().map(|(m, e)| (m.extend(extra), e.clone())).collect(),
        }
    }

    /// Substitutes decision-variable values.
    pub fn evaluate(&self, values: &[f64]) -> Polynomial {
        let mut out = Polynomial::zero(self.nvars);
        for (m, e) in &self.terms {
            out.add_term(m.clone(), e.evaluate(values));
        }
        out
    }
}

impl Add<&AffinePoly> for &AffinePoly {
    type Output = AffinePoly;
    fn add(self, rhs: &AffinePoly) -> AffinePoly {
        assert_eq!(self.nvars, rhs.nvars, "dimension mismatch");
        let mut out = self.clone();
        for (m, e) in &rhs.terms {
            out.add_term(m.clone(), e);
        }
        out
    }
}

impl Sub<&AffinePoly> for &AffinePoly {
    type Output = AffinePoly;
    fn sub(self, rhs: &AffinePoly) -> AffinePoly {
        self + &rhs.scale(-1.0)
    }
}

impl Neg for &AffinePoly {
    type Output = AffinePoly;
    fn neg(self) -> AffinePoly {
        self.scale(-1.0)
    }
}

impl From<&Polynomial> for AffinePoly {
    fn from(p: &Polynomial) -> Self {
        Self::from_poly(p)
    }
}
