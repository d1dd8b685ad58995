//! Monomial bases for the potential and its lower bound.
//!
//! The potential basis starts from the monomials of `Σ_i f_i x_i` (exact
//! for gradient fields) and is widened with mixed monomials that respect
//! the per-variable and total degree caps of that minimal set. The bound
//! basis holds the highest even pure powers plus the top-degree even mixed
//! monomials, which is what makes maximizing the bound push `U` upward
//! without making the program infeasible.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poly::{Monomial, Polynomial, VectorField};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BasisError {
    #[error("drift is identically zero")]
    ZeroField,
    #[error("potential basis contains only the constant monomial")]
    TrivialBasis,
    #[error(
        "infeasible by construction: no even pure power of x{} in the basis, \
         so the lower bound cannot exert pressure along that variable",
        .variable + 1
    )]
    NoPurePower { variable: usize },
    #[error("invalid basis: {0}")]
    Invalid(String),
}

/// Search space for the potential `U = c0 + Σ c_j p_j` and its lower bound
/// `Σ ε_i b_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub potential_basis: Vec<Monomial>,
    pub bound_basis: Vec<Monomial>,
    pub degree: u32,
}

impl BasisSpec {
    /// Validates the structural invariants and wraps the two bases.
    pub fn new(potential_basis: Vec<Monomial>, bound_basis: Vec<Monomial>) -> Result<Self, BasisError> {
        let n = potential_basis.first().map(Monomial::nvars).ok_or(BasisError::TrivialBasis)?;
        if potential_basis.iter().chain(&bound_basis).any(|m| m.nvars() != n) {
            return Err(BasisError::Invalid("monomials of mixed dimension".into()));
        }
        if !potential_basis.iter().any(Monomial::is_constant) {
            return Err(BasisError::Invalid("constant monomial missing from potential basis".into()));
        }
        if potential_basis.iter().all(Monomial::is_constant) {
            return Err(BasisError::TrivialBasis);
        }
        for b in &bound_basis {
            if !b.is_even() {
                return Err(BasisError::Invalid(format!("bound monomial {b} is not even")));
            }
            if !potential_basis.contains(b) {
                return Err(BasisError::Invalid(format!("bound monomial {b} not in potential basis")));
            }
        }
        for i in 0..n {
            if !bound_basis.iter().any(|b| b.pure_variable() == Some(i)) {
                return Err(BasisError::NoPurePower { variable: i });
            }
        }
        let degree = max_degree(&potential_basis);
        if max_degree(&bound_basis) != degree {
            return Err(BasisError::Invalid(
                "lower bound does not reach the top degree of the potential basis".into(),
            ));
        }
        Ok(Self { potential_basis, bound_basis, degree })
    }

    /// Full basis selection for a drift: minimal basis, degree cap,
    /// extension, then lower-bound monomials.
    pub fn for_field(f: &VectorField) -> Result<Self, BasisError> {
        let d = degree_bound(f).ok_or(BasisError::ZeroField)?;
        let minimal: Vec<Monomial> =
            minimal_basis(f).into_iter().filter(|m| m.degree() <= d).collect();
        let mut coupling = coupling_from_monomials(f.nvars(), &minimal);
        for (i, fi) in f.components().iter().enumerate() {
            for m in fi.monomials() {
                for (j, &e) in m.exponents().iter().enumerate() {
                    if e > 0 && j != i {
                        coupling.union(i, j);
                    }
                }
            }
        }
        let potential = extend_basis_with_coupling(&minimal, &coupling);
        let bound = lower_bound_monomials(&potential);
        Self::new(potential, bound)
    }

    pub fn nvars(&self) -> usize {
        self.potential_basis[0].nvars()
    }

    /// The non-constant potential monomials (the `p_j`).
    pub fn non_constant(&self) -> impl Iterator<Item = &Monomial> {
        self.potential_basis.iter().filter(|m| !m.is_constant())
    }
}

fn max_degree(ms: &[Monomial]) -> u32 {
    ms.iter().map(Monomial::degree).max().unwrap_or(0)
}

/// Degree cap for `U`: `e + 1` rounded down to an even number, at least 2,
/// where `e` is the degree of the drift. `None` for a zero drift.
pub fn degree_bound(f: &VectorField) -> Option<u32> {
    let e = f.max_degree()?;
    let d = e + 1;
    Some((d - d % 2).max(2))
}

/// Monomials of `Σ_i f_i x_i`, plus the constant monomial.
pub fn minimal_basis(f: &VectorField) -> Vec<Monomial> {
    let n = f.nvars();
    let mut s = Polynomial::zero(n);
    for (i, fi) in f.components().iter().enumerate() {
        s = &s + &(fi * &Polynomial::var(n, i));
    }
    let mut out: BTreeSet<Monomial> = s.monomials().cloned().collect();
    out.insert(Monomial::one(n));
    out.into_iter().collect()
}

/// Extends a minimal basis with admissible mixed monomials, coupling
/// variables only when the minimal basis already ties them together.
pub fn extend_basis(minimal: &[Monomial], n: usize) -> Vec<Monomial> {
    let coupling = coupling_from_monomials(n, minimal);
    extend_basis_with_coupling(minimal, &coupling)
}

/// Adds every mixed monomial whose total degree is at most that of the
/// minimal basis, whose degree in each `x_i` is at most the highest pure
/// power of `x_i` in the minimal basis, and whose variables all lie in one
/// coupling component.
pub fn extend_basis_with_coupling(minimal: &[Monomial], coupling: &Coupling) -> Vec<Monomial> {
    let n = coupling.len();
    let mut caps = vec![0u32; n];
    for m in minimal {
        if let Some(i) = m.pure_variable() {
            caps[i] = caps[i].max(m.exponent(i));
        }
    }
    let total = max_degree(minimal);
    let mut out: BTreeSet<Monomial> = minimal.iter().cloned().collect();
    for m in Monomial::all_up_to(n, total) {
        if !m.is_mixed() {
            continue;
        }
        if m.exponents().iter().zip(&caps).any(|(e, cap)| e > cap) {
            continue;
        }
        let vars: Vec<usize> = (0..n).filter(|&i| m.exponent(i) > 0).collect();
        let root = coupling.find(vars[0]);
        if vars.iter().all(|&v| coupling.find(v) == root) {
            out.insert(m);
        }
    }
    out.into_iter().collect()
}

/// Highest even pure power of each variable plus every even mixed monomial
/// of the basis' top total degree.
pub fn lower_bound_monomials(basis: &[Monomial]) -> Vec<Monomial> {
    let Some(n) = basis.first().map(Monomial::nvars) else {
        return Vec::new();
    };
    let mut out = BTreeSet::new();
    for i in 0..n {
        let best = basis
            .iter()
            .filter(|m| m.pure_variable() == Some(i) && m.is_even())
            .max_by_key(|m| m.exponent(i));
        if let Some(m) = best {
            out.insert(m.clone());
        }
    }
    let top = max_degree(basis);
    for m in basis {
        if m.is_mixed() && m.is_even() && m.degree() == top {
            out.insert(m.clone());
        }
    }
    out.into_iter().collect()
}

/// Union-find over variable indices.
#[derive(Debug, Clone)]
pub struct Coupling {
    parent: Vec<usize>,
}

impl Coupling {
    pub fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn find(&self, mut i: usize) -> usize {
        while self.parent[i] != i {
            i = self.parent[i];
        }
        i
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

fn coupling_from_monomials(n: usize, ms: &[Monomial]) -> Coupling {
    let mut c = Coupling::new(n);
    for m in ms {
        let vars: Vec<usize> = (0..n).filter(|&i| m.exponent(i) > 0).collect();
        for w in vars.windows(2) {
            c.union(w[0], w[1]);
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::parse_polynomial;

    fn field(parts: &[&str]) -> VectorField {
        let n = parts.len();
        VectorField::new(parts.iter().map(|s| parse_polynomial(s, n).unwrap()).collect()).unwrap()
    }

    fn mono(e: &[u32]) -> Monomial {
        Monomial::new(e.to_vec())
    }

    fn set(ms: &[&[u32]]) -> Vec<Monomial> {
        let s: BTreeSet<Monomial> = ms.iter().map(|e| mono(e)).collect();
        s.into_iter().collect()
    }

    fn cubic3() -> VectorField {
        field(&["x1 - x1^3", "-x2^3", "-x3^3"])
    }

    fn maier_stein(mu: f64, gamma: f64) -> VectorField {
        field(&[
            &format!("x1 - x1^3 - {gamma}*x1*x2^2"),
            &format!("-{mu}*(1 + x1^2)*x2"),
        ])
    }

    fn linear_ivb() -> VectorField {
        field(&["-5*x1 + 0.2*x3", "-1.5*x2 + 3*x3", "0.5*x1 - 5*x2 - x3"])
    }

    #[test]
    fn degree_bound_examples() {
        assert_eq!(degree_bound(&cubic3()), Some(4));
        assert_eq!(degree_bound(&linear_ivb()), Some(2));
        assert_eq!(degree_bound(&field(&["-x1^5"])), Some(6));
        assert_eq!(degree_bound(&field(&["-x1 - x1^2"])), Some(2));
        assert_eq!(degree_bound(&VectorField::zero(2)), None);
    }

    #[test]
    fn minimal_basis_examples() {
        assert_eq!(
            minimal_basis(&cubic3()),
            set(&[&[4, 0, 0], &[0, 4, 0], &[0, 0, 4], &[2, 0, 0], &[0, 0, 0]])
        );
        assert_eq!(minimal_basis(&field(&["x1 - x1^3 + 0.3"])), set(&[&[4], &[2], &[1], &[0]]));
        assert_eq!(
            minimal_basis(&maier_stein(1.0, 10.0)),
            set(&[&[4, 0], &[2, 2], &[2, 0], &[0, 2], &[0, 0]])
        );
    }

    #[test]
    fn extension_adds_missing_cross_term() {
        let minimal = minimal_basis(&linear_ivb());
        assert_eq!(
            minimal,
            set(&[&[2, 0, 0], &[0, 2, 0], &[0, 0, 2], &[1, 0, 1], &[0, 1, 1], &[0, 0, 0]])
        );
        let ext = extend_basis(&minimal, 3);
        let added: Vec<_> = ext.iter().filter(|m| !minimal.contains(m)).cloned().collect();
        assert_eq!(added, vec![mono(&[1, 1, 0])]);
    }

    #[test]
    fn extension_leaves_decoupled_and_scalar_bases() {
        let minimal = minimal_basis(&cubic3());
        assert_eq!(extend_basis(&minimal, 3), minimal);
        let one_d = minimal_basis(&field(&["x1 - x1^3"]));
        assert_eq!(extend_basis(&one_d, 1), one_d);
    }

    #[test]
    fn extension_respects_degree_caps() {
        let minimal = minimal_basis(&maier_stein(1.0, 1.0));
        let ext = extend_basis(&minimal, 2);
        for m in &ext {
            assert!(m.degree() <= 4);
            assert!(m.exponent(0) <= 4 && m.exponent(1) <= 2, "{m}");
        }
        assert!(ext.contains(&mono(&[3, 1])));
        assert!(!ext.contains(&mono(&[1, 3])));
    }

    #[test]
    fn lower_bound_examples() {
        assert_eq!(lower_bound_monomials(&set(&[&[4], &[2], &[1], &[0]])), set(&[&[4]]));
        let quad = extend_basis(&minimal_basis(&linear_ivb()), 3);
        assert_eq!(lower_bound_monomials(&quad), set(&[&[2, 0, 0], &[0, 2, 0], &[0, 0, 2]]));
        let ms = BasisSpec::for_field(&maier_stein(1.0, 1.0)).unwrap();
        assert_eq!(ms.bound_basis, set(&[&[4, 0], &[2, 2], &[0, 2]]));
        for b in &ms.bound_basis {
            assert!(b.is_even());
            assert!(ms.potential_basis.contains(b));
        }
    }

    #[test]
    fn spec_rejects_missing_pure_power() {
        // x2 only enters through a mixed term
        let f = field(&["-x1 - x1*x2", "x1^2"]);
        let err = BasisSpec::for_field(&f).unwrap_err();
        assert_eq!(err, BasisError::NoPurePower { variable: 1 });
        assert!(err.to_string().contains("x2"));
    }

    #[test]
    fn spec_for_quartic_system() {
        let f = field(&[
            "-1 + 9*x1 - 2*x1^3 + 9*x2 - 2*x2^3",
            "1 - 11*x1 + 2*x1^3 + 11*x2 - 2*x2^3",
        ]);
        let spec = BasisSpec::for_field(&f).unwrap();
        assert_eq!(spec.degree, 4);
        for m in [[4, 0], [0, 4], [2, 0], [0, 2], [1, 1], [1, 0]] {
            assert!(spec.potential_basis.contains(&mono(&m)));
        }
        assert_eq!(spec.bound_basis, set(&[&[4, 0], &[0, 4], &[2, 2]]));
    }
}
