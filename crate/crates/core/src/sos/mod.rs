//! Sum-of-squares programs compiled to standard-form SDPs.
//!
//! A scalar constraint `p ∈ Σ` introduces a Gram block `Q ⪰ 0` over a
//! monomial vector `z` and one equality per monomial matching the
//! coefficients of `p` and `zᵀQz`. A polynomial-matrix constraint
//! `M(x) ⪰ 0` is handled through `yᵀM(x)y ∈ Σ` with a Gram basis of the form
//! `y_k · m(x)`, degree one in the auxiliary variables `y`.
//!
//! Gram bases are trimmed to the bounding box of half the Newton polytope of
//! the (structural) support, which is sound for every constraint built here.

mod affine;
mod clarabel_backend;
mod sdp;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poly::{Monomial, Polynomial};

pub use affine::{AffineExpr, AffinePoly, VarId};
pub use clarabel_backend::ClarabelSolver;
pub use sdp::{
    min_eigenvalue, LinearRow, SdpError, SdpProblem, SdpSolution, SdpSolver, SdpStatus, SdpVar, Sense,
};

/// Default tolerance when judging a returned certificate.
pub const CERTIFICATE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SosError {
    #[error("constraint '{label}': leading degree {degree} is odd, the polynomial cannot be SOS")]
    OddDegree { label: String, degree: u32 },
    #[error("constraint '{label}': matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { label: String, row: usize, col: usize },
    #[error("constraint '{label}': {message}")]
    Malformed { label: String, message: String },
    #[error(transparent)]
    Sdp(#[from] SdpError),
}

/// Gram monomials of total degree at most `degree / 2`.
///
/// With a support hint, keeps only monomials `m` such that `2m` lies in the
/// componentwise and total-degree envelope (both lower and upper) of the
/// hint.
pub fn gram_basis(degree: u32, n: usize, support_hint: Option<&[Monomial]>) -> Vec<Monomial> {
    let all = Monomial::all_up_to(n, degree / 2);
    let Some(hint) = support_hint.filter(|h| !h.is_empty()) else {
        return all;
    };
    let mut lo = vec![u32::MAX; n];
    let mut hi = vec![0u32; n];
    let (mut dlo, mut dhi) = (u32::MAX, 0u32);
    for m in hint {
        for i in 0..n {
            lo[i] = lo[i].min(m.exponent(i));
            hi[i] = hi[i].max(m.exponent(i));
        }
        dlo = dlo.min(m.degree());
        dhi = dhi.max(m.degree());
    }
    all.into_iter()
        .filter(|m| {
            let d2 = 2 * m.degree();
            d2 >= dlo
                && d2 <= dhi
                && (0..n).all(|i| {
                    let e2 = 2 * m.exponent(i);
                    e2 >= lo[i] && e2 <= hi[i]
                })
        })
        .collect()
}

fn has_fixed_top_term(p: &AffinePoly, d: u32) -> bool {
    p.terms().any(|(m, e)| m.degree() == d && e.coeffs.is_empty())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConstraintHandle(usize);

#[derive(Debug, Clone)]
struct VarInfo {
    name: String,
    lower: Option<f64>,
    upper: Option<f64>,
}

#[derive(Debug, Clone)]
struct Constraint {
    label: String,
    poly: AffinePoly,
    gram_basis: Vec<Monomial>,
}

/// Gram-matrix certificate `p = zᵀ Q z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SosCertificate {
    pub label: String,
    pub gram_basis: Vec<Monomial>,
    #[serde(with = "matrix_serde")]
    pub gram_matrix: DMatrix<f64>,
}

impl SosCertificate {
    /// Expands `zᵀQz`.
    pub fn expand(&self) -> Polynomial {
        let n = self.gram_basis.first().map(Monomial::nvars).unwrap_or(0);
        let mut out = Polynomial::zero(n);
        for (i, mi) in self.gram_basis.iter().enumerate() {
            for (j, mj) in self.gram_basis.iter().enumerate() {
                out.add_term(mi.mul(mj), self.gram_matrix[(i, j)]);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    /// `‖coeff(p) − coeff(zᵀQz)‖_∞`.
    pub coefficient_residual: f64,
    /// `λ_min(Q)`.
    pub min_eigenvalue: f64,
}

impl CertificateReport {
    pub fn is_valid(&self, tol: f64) -> bool {
        self.coefficient_residual <= tol && self.min_eigenvalue >= -tol
    }
}

pub fn check_certificate(cert: &SosCertificate, p: &Polynomial) -> CertificateReport {
    let residual = if cert.gram_basis.is_empty() {
        p.max_abs_coefficient()
    } else {
        (p - &cert.expand()).max_abs_coefficient()
    };
    CertificateReport {
        coefficient_residual: residual,
        min_eigenvalue: min_eigenvalue(&cert.gram_matrix),
    }
}

#[derive(Debug, Clone)]
pub struct SosProgram {
    vars: Vec<VarInfo>,
    constraints: Vec<Constraint>,
    objective: AffineExpr,
    sense: Sense,
}

impl Default for SosProgram {
    fn default() -> Self {
        Self::new()
    }
}

impl SosProgram {
    pub fn new() -> Self {
        Self { vars: Vec::new(), constraints: Vec::new(), objective: AffineExpr::default(), sense: Sense::Minimize }
    }

    pub fn new_var(&mut self, name: impl Into<String>) -> VarId {
        self.new_bounded_var(name, None, None)
    }

    pub fn new_bounded_var(&mut self, name: impl Into<String>, lower: Option<f64>, upper: Option<f64>) -> VarId {
        self.vars.push(VarInfo { name: name.into(), lower, upper });
        VarId(self.vars.len() - 1)
    }

    pub fn var_name(&self, v: VarId) -> &str {
        &self.vars[v.0].name
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn set_objective(&mut self, sense: Sense, expr: AffineExpr) {
        self.sense = sense;
        self.objective = expr;
    }

    /// Requires `p` to be a sum of squares.
    pub fn add_scalar_sos(&mut self, label: &str, p: &AffinePoly) -> Result<ConstraintHandle, SosError> {
        let n = p.nvars();
        let support: Vec<Monomial> = p.support().cloned().collect();
        let basis = match p.degree() {
            None => Vec::new(),
            Some(d) if d % 2 == 1 && has_fixed_top_term(p, d) => {
                return Err(SosError::OddDegree { label: label.into(), degree: d });
            }
            // odd top-degree terms that depend on decision variables are
            // simply forced to vanish by the coefficient matching
            Some(d) => gram_basis(d, n, Some(&support)),
        };
        Ok(self.push(label, p.clone(), basis))
    }

    /// Requires the symmetric polynomial matrix `m` to be PSD for every `x`.
    pub fn add_matrix_sos(&mut self, label: &str, m: &[Vec<AffinePoly>]) -> Result<ConstraintHandle, SosError> {
        let k = m.len();
        if k == 0 || m.iter().any(|row| row.len() != k) {
            return Err(SosError::Malformed { label: label.into(), message: "matrix must be square and non-empty".into() });
        }
        let n = m[0][0].nvars();
        for a in 0..k {
            for b in 0..k {
                if m[a][b].nvars() != n {
                    return Err(SosError::Malformed { label: label.into(), message: "entries of mixed dimension".into() });
                }
                if b > a && m[a][b] != m[b][a] {
                    return Err(SosError::NotSymmetric { label: label.into(), row: a, col: b });
                }
            }
        }
        let y = |a: usize| Monomial::var(n + k, n + a);
        let mut q = AffinePoly::zero(n + k);
        let mut basis = Vec::new();
        for a in 0..k {
            for b in a..k {
                let w = if a == b { 1.0 } else { 2.0 };
                let ya_yb = y(a).mul(&y(b));
                for (mono, e) in m[a][b].extend(k).terms() {
                    q.add_term(mono.mul(&ya_yb), &e.scale(w));
                }
            }
            let diag = &m[a][a];
            match diag.degree() {
                None => {}
                Some(d) if d % 2 == 1 && has_fixed_top_term(diag, d) => {
                    return Err(SosError::OddDegree { label: format!("{label}[{a},{a}]"), degree: d });
                }
                Some(d) => {
                    let support: Vec<Monomial> = diag.support().cloned().collect();
                    for half in gram_basis(d, n, Some(&support)) {
                        basis.push(half.extend(k).mul(&y(a)));
                    }
                }
            }
        }
        Ok(self.push(label, q, basis))
    }

    fn push(&mut self, label: &str, poly: AffinePoly, gram_basis: Vec<Monomial>) -> ConstraintHandle {
        self.constraints.push(Constraint { label: label.into(), poly, gram_basis });
        ConstraintHandle(self.constraints.len() - 1)
    }

    pub fn gram_basis_of(&self, h: ConstraintHandle) -> &[Monomial] {
        &self.constraints[h.0].gram_basis
    }

    /// Lowers the program to standard form. Block `k` is the Gram matrix of
    /// constraint `k` (empty bases get a zero-sized placeholder that the
    /// backend never sees); variable bounds become trailing 1×1 blocks.
    pub fn compile(&self) -> SdpProblem {
        let mut sdp = SdpProblem::new(self.sense);
        sdp.num_free = self.vars.len();
        sdp.objective = self.objective.coeffs.iter().map(|(v, &c)| (SdpVar::Free(v.0), c)).collect();

        for (k, con) in self.constraints.iter().enumerate() {
            sdp.block_sizes.push(con.gram_basis.len());
            let mut rows: BTreeMap<Monomial, Vec<(SdpVar, f64)>> = BTreeMap::new();
            let mut rhs: BTreeMap<Monomial, f64> = BTreeMap::new();
            for (m, e) in con.poly.terms() {
                let row = rows.entry(m.clone()).or_default();
                for (v, &c) in &e.coeffs {
                    row.push((SdpVar::Free(v.0), c));
                }
                rhs.insert(m.clone(), -e.constant);
            }
            for (i, mi) in con.gram_basis.iter().enumerate() {
                for (j, mj) in con.gram_basis.iter().enumerate().skip(i) {
                    let w = if i == j { 1.0 } else { 2.0 };
                    rows.entry(mi.mul(mj)).or_default().push((SdpVar::entry(k, i, j), -w));
                }
            }
            for (m, entries) in rows {
                let r = rhs.get(&m).copied().unwrap_or(0.0);
                sdp.equalities.push(LinearRow { entries, rhs: r });
            }
        }
        for (i, v) in self.vars.iter().enumerate() {
            for (bound, sign) in [(v.lower, -1.0), (v.upper, 1.0)] {
                if let Some(b) = bound {
                    let blk = sdp.block_sizes.len();
                    sdp.block_sizes.push(1);
                    sdp.equalities.push(LinearRow {
                        entries: vec![(SdpVar::Free(i), 1.0), (SdpVar::entry(blk, 0, 0), sign)],
                        rhs: b,
                    });
                }
            }
        }
        sdp
    }

    pub fn solve(&self, solver: &dyn SdpSolver) -> Result<SosSolution, SosError> {
        let full = self.compile();
        // drop zero-sized blocks before handing off
        let keep: Vec<usize> = (0..full.block_sizes.len()).filter(|&b| full.block_sizes[b] > 0).collect();
        let mut remap = vec![usize::MAX; full.block_sizes.len()];
        for (new, &old) in keep.iter().enumerate() {
            remap[old] = new;
        }
        let mut sdp = full.clone();
        sdp.block_sizes = keep.iter().map(|&b| full.block_sizes[b]).collect();
        for eq in &mut sdp.equalities {
            for (v, _) in &mut eq.entries {
                if let SdpVar::Block { block, .. } = v {
                    *block = remap[*block];
                }
            }
        }
        let raw = solver.solve(&sdp)?;

        let values = raw.free.clone();
        let mut certificates = Vec::with_capacity(self.constraints.len());
        let mut reports = Vec::with_capacity(self.constraints.len());
        let mut polys = Vec::with_capacity(self.constraints.len());
        for (k, con) in self.constraints.iter().enumerate() {
            let gram = if con.gram_basis.is_empty() {
                DMatrix::zeros(0, 0)
            } else {
                raw.blocks[remap[k]].clone()
            };
            let cert = SosCertificate { label: con.label.clone(), gram_basis: con.gram_basis.clone(), gram_matrix: gram };
            let p = con.poly.evaluate(&values);
            reports.push(check_certificate(&cert, &p));
            certificates.push(cert);
            polys.push(p);
        }
        Ok(SosSolution { values, certificates, reports, polys, sdp: raw })
    }
}

#[derive(Debug, Clone)]
pub struct SosSolution {
    values: Vec<f64>,
    certificates: Vec<SosCertificate>,
    reports: Vec<CertificateReport>,
    polys: Vec<Polynomial>,
    pub sdp: SdpSolution,
}

impl SosSolution {
    pub fn status(&self) -> SdpStatus {
        self.sdp.status
    }

    pub fn value(&self, v: VarId) -> f64 {
        self.values[v.0]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn certificate(&self, h: ConstraintHandle) -> &SosCertificate {
        &self.certificates[h.0]
    }

    pub fn certificates(&self) -> &[SosCertificate] {
        &self.certificates
    }

    /// The constrained polynomial with the solution substituted.
    pub fn polynomial(&self, h: ConstraintHandle) -> &Polynomial {
        &self.polys[h.0]
    }

    pub fn report(&self, h: ConstraintHandle) -> CertificateReport {
        self.reports[h.0]
    }

    pub fn reports(&self) -> &[CertificateReport] {
        &self.reports
    }

    pub fn all_certified(&self, tol: f64) -> bool {
        self.reports.iter().all(|r| r.is_valid(tol))
    }
}

mod matrix_serde {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        let n = rows.len();
        let m = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != m) {
            return Err(serde::de::Error::custom("ragged matrix"));
        }
        Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::parse_polynomial;

    fn poly(s: &str, n: usize) -> Polynomial {
        parse_polynomial(s, n).unwrap()
    }

    fn mono(e: &[u32]) -> Monomial {
        Monomial::new(e.to_vec())
    }

    fn feasible(p: &Polynomial) -> (SdpStatus, Option<CertificateReport>) {
        let mut prog = SosProgram::new();
        let h = prog.add_scalar_sos("p", &AffinePoly::from_poly(p)).unwrap();
        let sol = prog.solve(&ClarabelSolver::default()).unwrap();
        (sol.status(), Some(sol.report(h)))
    }

    #[test]
    fn gram_basis_examples() {
        assert_eq!(gram_basis(4, 1, None), vec![mono(&[0]), mono(&[1]), mono(&[2])]);
        assert_eq!(gram_basis(2, 3, None).len(), 4);
        let ms = [mono(&[4, 0]), mono(&[2, 2]), mono(&[2, 0]), mono(&[0, 2]), mono(&[0, 0])];
        let got = gram_basis(4, 2, Some(&ms));
        assert_eq!(got, vec![mono(&[0, 0]), mono(&[0, 1]), mono(&[1, 0]), mono(&[1, 1]), mono(&[2, 0])]);
    }

    #[test]
    fn gram_basis_respects_lower_envelope() {
        let quad = [mono(&[2, 0]), mono(&[1, 1]), mono(&[0, 2])];
        assert_eq!(gram_basis(2, 2, Some(&quad)), vec![mono(&[0, 1]), mono(&[1, 0])]);
    }

    #[test]
    fn scalar_sos_examples() {
        let (st, rep) = feasible(&poly("x^2 + 2*x + 1", 1));
        assert_eq!(st, SdpStatus::Optimal);
        assert!(rep.unwrap().is_valid(CERTIFICATE_TOLERANCE));

        let (st, _) = feasible(&poly("x^2 - 1", 1));
        assert_eq!(st, SdpStatus::Infeasible);

        let (st, rep) = feasible(&poly("x^4 - x^2 + 1", 1));
        assert_eq!(st, SdpStatus::Optimal);
        assert!(rep.unwrap().is_valid(CERTIFICATE_TOLERANCE));
    }

    #[test]
    fn odd_degree_rejected_before_solve() {
        let mut prog = SosProgram::new();
        let err = prog.add_scalar_sos("cubic", &AffinePoly::from_poly(&poly("x^3 + 1", 1))).unwrap_err();
        assert!(matches!(err, SosError::OddDegree { degree: 3, .. }));
    }

    #[test]
    fn maximize_scaled_square() {
        // maximize e s.t. x^2 - e x^2 SOS  ->  e = 1
        let mut prog = SosProgram::new();
        let e = prog.new_var("e");
        let p = &AffinePoly::from_poly(&poly("x^2", 1)) - &AffinePoly::poly_times_var(&poly("x^2", 1), e);
        prog.add_scalar_sos("p", &p).unwrap();
        prog.set_objective(Sense::Maximize, AffineExpr::var(e));
        let sol = prog.solve(&ClarabelSolver::default()).unwrap();
        assert_eq!(sol.status(), SdpStatus::Optimal);
        assert!((sol.value(e) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn scalar_riccati_maximal_solution() {
        // maximize P s.t. ½P x² ≥ ε x² is implied, P(A+P) ≤ 0 with A = -2:
        // matrix [[-(P x)(A x), P x], [P x, 1]] ⪰ 0  ⇔  -P A - P² ≥ 0  ⇒  P ≤ 2
        let mut prog = SosProgram::new();
        let p = prog.new_bounded_var("P", Some(0.0), None);
        let x = poly("x", 1);
        let grad = AffinePoly::poly_times_var(&x, p);
        let top = grad.mul_poly(&poly("2*x", 1));
        let one = AffinePoly::from_poly(&Polynomial::constant(1, 1.0));
        let m = vec![vec![top, grad.clone()], vec![grad, one]];
        prog.add_matrix_sos("riccati", &m).unwrap();
        prog.set_objective(Sense::Maximize, AffineExpr::var(p));
        let sol = prog.solve(&ClarabelSolver::default()).unwrap();
        assert_eq!(sol.status(), SdpStatus::Optimal);
        assert!((sol.value(p) - 2.0).abs() < 1e-5, "P = {}", sol.value(p));
    }

    #[test]
    fn matrix_sos_examples() {
        let one = |s: &str| AffinePoly::from_poly(&poly(s, 1));
        let mut prog = SosProgram::new();
        let h = prog
            .add_matrix_sos("m", &[vec![one("1"), one("x")], vec![one("x"), one("x^2 + 1")]])
            .unwrap();
        let sol = prog.solve(&ClarabelSolver::default()).unwrap();
        assert_eq!(sol.status(), SdpStatus::Optimal);
        assert!(sol.report(h).is_valid(CERTIFICATE_TOLERANCE));

        let mut prog = SosProgram::new();
        prog.add_matrix_sos("m", &[vec![one("x^2"), one("0")], vec![one("0"), one("-1")]]).unwrap();
        let sol = prog.solve(&ClarabelSolver::default()).unwrap();
        assert_eq!(sol.status(), SdpStatus::Infeasible);
    }

    #[test]
    fn boundary_feasible_schur_matrix() {
        // U = x^4/4 - x^2/2, f = x - x^3: Schur complement is identically zero
        let one = |s: &str| AffinePoly::from_poly(&poly(s, 1));
        let m = vec![
            vec![one("-(x^3 - x)*(x - x^3)"), one("x^3 - x")],
            vec![one("x^3 - x"), one("1")],
        ];
        let mut prog = SosProgram::new();
        let h = prog.add_matrix_sos("schur", &m).unwrap();
        let sol = prog.solve(&ClarabelSolver::default()).unwrap();
        assert_eq!(sol.status(), SdpStatus::Optimal);
        let rep = sol.report(h);
        assert!(rep.coefficient_residual < 1e-6);
        assert!(rep.min_eigenvalue.abs() < 1e-6, "λ_min = {}", rep.min_eigenvalue);
    }

    #[test]
    fn asymmetric_matrix_rejected() {
        let one = |s: &str| AffinePoly::from_poly(&poly(s, 1));
        let mut prog = SosProgram::new();
        let err = prog
            .add_matrix_sos("m", &[vec![one("1"), one("x")], vec![one("2*x"), one("1")]])
            .unwrap_err();
        assert!(matches!(err, SosError::NotSymmetric { row: 0, col: 1, .. }));
    }

    #[test]
    fn certificate_check_detects_perturbation() {
        let cert = SosCertificate {
            label: "sq".into(),
            gram_basis: vec![mono(&[0]), mono(&[1])],
            gram_matrix: DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]),
        };
        let p = poly("x^2 + 2*x + 1", 1);
        let exact = check_certificate(&cert, &p);
        assert_eq!(exact.coefficient_residual, 0.0);
        assert!(exact.min_eigenvalue >= -1e-12);

        let mut bumped = cert.clone();
        bumped.gram_matrix[(1, 1)] += 1e-3;
        let rep = check_certificate(&bumped, &p);
        assert!((rep.coefficient_residual - 1e-3).abs() < 1e-12);
    }
}
