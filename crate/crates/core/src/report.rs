//! Result documents and CSV output.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::BasisSpec;
use crate::decompose::{DecompositionResult, DecompositionStatus, IterationRecord, SolverDiagnostics};
use crate::poly::{Monomial, PolyError, Polynomial};
use crate::sos::{CertificateReport, SosCertificate};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// C's `%.10g`: ten significant digits, trailing zeros removed, exponent
/// form outside `[1e-4, 1e10)`.
pub fn format_g(v: f64) -> String {
    const P: i32 = 10;
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{:.*e}", (P - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if exp < -4 || exp >= P {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        trim_zeros(&format!("{:.*}", (P - 1 - exp) as usize, v)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// One polynomial term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub monomial: String,
    pub exponents: Vec<u32>,
    pub coefficient: f64,
}

pub fn terms_of(p: &Polynomial) -> Vec<Term> {
    p.terms()
        .rev()
        .map(|(m, c)| Term { monomial: m.to_string(), exponents: m.exponents().to_vec(), coefficient: c })
        .collect()
}

pub fn polynomial_from_terms(nvars: usize, terms: &[Term]) -> Result<Polynomial, PolyError> {
    Polynomial::from_terms(nvars, terms.iter().map(|t| (Monomial::new(t.exponents.clone()), t.coefficient)))
}

/// Serialized decomposition. Coefficients survive a JSON round trip exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub name: String,
    pub dimension: usize,
    pub drift: Vec<String>,
    pub status: DecompositionStatus,
    pub potential: Vec<Term>,
    pub potential_text: String,
    pub f_u: Vec<Vec<Term>>,
    pub defect: Vec<Term>,
    pub defect_measure: f64,
    pub normalization_shift: f64,
    pub basis: BasisSpec,
    pub epsilon: Vec<f64>,
    pub iterations: Vec<IterationRecord>,
    pub certificate_reports: Vec<CertificateReport>,
    pub diagnostics: Vec<SolverDiagnostics>,
    pub certificates: Vec<SosCertificate>,
}

impl ResultDocument {
    pub fn new(name: &str, r: &DecompositionResult) -> Self {
        Self {
            name: name.to_string(),
            dimension: r.field.nvars(),
            drift: r.field.components().iter().map(|c| c.to_string()).collect(),
            status: r.status,
            potential: terms_of(&r.u),
            potential_text: r.u.to_string(),
            f_u: r.f_u.components().iter().map(terms_of).collect(),
            defect: terms_of(&r.defect),
            defect_measure: r.defect_measure(),
            normalization_shift: r.normalization_shift,
            basis: r.basis.clone(),
            epsilon: r.epsilon.clone(),
            iterations: r.iterations.clone(),
            certificate_reports: r.certificate_reports.clone(),
            diagnostics: r.diagnostics.clone(),
            certificates: r.certificates.clone(),
        }
    }

    pub fn potential(&self) -> Result<Polynomial, PolyError> {
        polynomial_from_terms(self.dimension, &self.potential)
    }

    pub fn to_json(&self) -> Result<String, ReportError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        Ok(serde_json::from_str(text)?)
    }
}

/// `monomial,coefficient` rows, highest term first.
pub fn coefficient_csv(p: &Polynomial) -> String {
    let mut out = String::from("monomial,coefficient\n");
    for (m, c) in p.terms().rev() {
        out.push_str(&format!("{m},{}\n", format_g(c)));
    }
    out
}

/// Tensor grid with `resolution` points per axis; one point means the midpoint.
pub fn grid_axes(domain: &[[f64; 2]], resolution: usize) -> Vec<Vec<f64>> {
    domain
        .iter()
        .map(|&[lo, hi]| match resolution {
            0 => Vec::new(),
            1 => vec![0.5 * (lo + hi)],
            k => (0..k).map(|j| lo + (hi - lo) * j as f64 / (k - 1) as f64).collect(),
        })
        .collect()
}

/// `x1,...,xn,U` over the grid, last coordinate varying fastest.
pub fn grid_csv(u: &Polynomial, axes: &[Vec<f64>]) -> Result<String, PolyError> {
    let n = axes.len();
    let mut out: String = (1..=n).map(|i| format!("x{i},")).collect();
    out.push_str("U\n");
    if axes.iter().any(|a| a.is_empty()) {
        return Ok(out);
    }
    let compiled = crate::poly::CompiledPoly::new(u);
    let mut idx = vec![0usize; n];
    let mut x = vec![0.0; n];
    loop {
        for i in 0..n {
            x[i] = axes[i][idx[i]];
            out.push_str(&format_g(x[i]));
            out.push(',');
        }
        if compiled.nvars() != n {
            return Err(PolyError::DimensionMismatch { expected: compiled.nvars(), found: n });
        }
        out.push_str(&format_g(compiled.evaluate(&x)));
        out.push('\n');
        let mut d = n;
        loop {
            if d == 0 {
                return Ok(out);
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < axes[d].len() {
                break;
            }
            idx[d] = 0;
        }
    }
}
