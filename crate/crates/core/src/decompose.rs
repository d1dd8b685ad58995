//! Sub-orthogonal decomposition `f = -∇U + f_U` with `∇U · f_U ≤ 0`.
//!
//! The first stage maximizes a lower bound `Σ ε_i b_i ≤ U` under the matrix
//! constraint `M_U = [[-∇U·f, ∇Uᵀ], [∇U, I]] ⪰ 0`, which by a Schur
//! complement is exactly sub-orthogonality. Later stages linearize around the
//! previous potential and minimize `α` in
//! `∇U₂·(f + 2∇U₁) ≥ α (f·∇U₁) + (1 + α) |∇U₁|²`; any `α < 1` certifies a
//! pointwise smaller defect.

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::{BasisError, BasisSpec};
use crate::poly::{Polynomial, VectorField};
use crate::sos::{
    AffineExpr, AffinePoly, CertificateReport, ClarabelSolver, SdpStatus, Sense, SosCertificate, SosError,
    SosProgram, SosSolution, VarId,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecomposeConfig {
    pub max_iterations: usize,
    /// Stop once the improvement program returns `α` at or above this.
    pub alpha_stop: f64,
    /// Stop once the relative drop of the defect measure falls below this.
    pub defect_stop: f64,
    /// Lower bound on `ε` in `U₂ ≥ ε |x|²` during improvement.
    pub epsilon_posdef: f64,
    /// Reference state where the returned `U` vanishes. Without one the
    /// constant term is dropped.
    pub normalization_point: Option<Vec<f64>>,
    /// Per-axis `[lo, hi]` of the defect-measure box, `[-2, 2]` when absent.
    #[serde(rename = "box")]
    pub domain: Option<Vec<[f64; 2]>>,
    pub grid_points: usize,
    /// Upper bound on the free constant `c0` in the lower-bound program.
    /// The supremum of `Σ ε_i` is approached only as `c0 → ∞`.
    pub constant_cap: f64,
    /// Fraction by which the previous potential is scaled down before the
    /// improvement program linearizes around it.
    pub interior_shrink: f64,
    pub certificate_tolerance: f64,
    pub solver_tolerance: f64,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        Self {
            max_iterations: 5,
            alpha_stop: 0.999,
            defect_stop: 1e-4,
            epsilon_posdef: 1e-6,
            normalization_point: None,
            domain: None,
            grid_points: 21,
            constant_cap: 1e4,
            interior_shrink: 1e-2,
            certificate_tolerance: 1e-6,
            solver_tolerance: 1e-9,
        }
    }
}

impl DecomposeConfig {
    pub fn validate(&self, n: usize) -> Result<(), DecomposeError> {
        let bad = |m: String| Err(DecomposeError::InvalidConfig(m));
        if !(self.alpha_stop > 0.0 && self.alpha_stop <= 1.0) {
            return bad(format!("alpha_stop must lie in (0, 1], got {}", self.alpha_stop));
        }
        if !(self.defect_stop >= 0.0) {
            return bad(format!("defect_stop must be non-negative, got {}", self.defect_stop));
        }
        if !(self.epsilon_posdef > 0.0) {
            return bad(format!("epsilon_posdef must be positive, got {}", self.epsilon_posdef));
        }
        if !(self.constant_cap > 0.0 && self.constant_cap.is_finite()) {
            return bad(format!("constant_cap must be positive and finite, got {}", self.constant_cap));
        }
        if !(0.0..1.0).contains(&self.interior_shrink) {
            return bad(format!("interior_shrink must lie in [0, 1), got {}", self.interior_shrink));
        }
        if self.grid_points < 2 {
            return bad("grid_points must be at least 2".into());
        }
        if let Some(x) = &self.normalization_point {
            if x.len() != n {
                return bad(format!("normalization_point has {} entries, system has {n}", x.len()));
            }
        }
        if let Some(d) = &self.domain {
            if d.len() != n {
                return bad(format!("box has {} intervals, system has {n}", d.len()));
            }
            if d.iter().any(|[lo, hi]| !(lo < hi)) {
                return bad("box intervals need lo < hi".into());
            }
        }
        Ok(())
    }

    pub fn solver(&self) -> ClarabelSolver {
        ClarabelSolver { tolerance: self.solver_tolerance, ..ClarabelSolver::default() }
    }

    /// Quadrature axes for the defect measure.
    pub fn grid_axes(&self, n: usize) -> Vec<Vec<f64>> {
        let k = self.grid_points;
        (0..n)
            .map(|i| {
                let [lo, hi] = self.domain.as_ref().map(|d| d[i]).unwrap_or([-2.0, 2.0]);
                (0..k).map(|j| lo + (hi - lo) * j as f64 / (k - 1) as f64).collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Basis,
    Construct,
    Iterate,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Basis => "basis selection",
            Stage::Construct => "initial construction",
            Stage::Iterate => "iterative improvement",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecomposeError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("basis selection: {0}")]
    Basis(#[from] BasisError),
    #[error(
        "{stage}: infeasible ({detail}); no polynomial Lyapunov function with a \
         sub-orthogonal gradient exists in this basis, check that the system is stable"
    )]
    Infeasible { stage: Stage, detail: String },
    #[error("{stage}: unbounded; the lower bound is not held in check, the basis is probably missing a pure power")]
    Unbounded { stage: Stage },
    #[error("{stage}: solver failure ({detail})")]
    SolverFailure { stage: Stage, detail: String },
    #[error("{stage}: {source}")]
    Sos { stage: Stage, source: SosError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecompositionStatus {
    /// Every returned certificate checks out at the configured tolerance.
    Certified,
    /// The solver returned a point whose certificates fail the check.
    Uncertified,
}

/// Backend diagnostics for one SDP solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub stage: Stage,
    pub status: SdpStatus,
    pub reduced_accuracy: bool,
    pub iterations: u32,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub duality_gap: f64,
    pub max_equality_residual: f64,
    pub min_eigenvalue: f64,
}

impl SolverDiagnostics {
    fn from_solution(stage: Stage, s: &SosSolution) -> Self {
        Self {
            stage,
            status: s.sdp.status,
            reduced_accuracy: s.sdp.reduced_accuracy,
            iterations: s.sdp.iterations,
            primal_residual: s.sdp.primal_residual,
            dual_residual: s.sdp.dual_residual,
            duality_gap: s.sdp.duality_gap,
            max_equality_residual: s.sdp.max_equality_residual,
            min_eigenvalue: s.sdp.min_eigenvalue,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// `None` for the initial construction.
    pub alpha: Option<f64>,
    pub defect_measure: f64,
}

/// Output of a single program: the potential as solved (constant included)
/// and the certificates backing it.
#[derive(Debug, Clone)]
pub struct StageSolution {
    pub u: Polynomial,
    /// Lower-bound weights `ε_i` (construction) or the single `ε` of
    /// `U ≥ ε |x|²` (improvement).
    pub epsilon: Vec<f64>,
    /// `α` of the improvement program, `None` for the construction.
    pub alpha: Option<f64>,
    pub certificates: Vec<SosCertificate>,
    pub reports: Vec<CertificateReport>,
    pub diagnostics: Option<SolverDiagnostics>,
}

#[derive(Debug, Clone)]
pub struct DecompositionResult {
    pub field: VectorField,
    pub basis: BasisSpec,
    /// The normalized potential.
    pub u: Polynomial,
    /// `f + ∇U`.
    pub f_u: VectorField,
    /// `-∇U·f - |∇U|²`, non-negative when sub-orthogonal.
    pub defect: Polynomial,
    pub iterations: Vec<IterationRecord>,
    /// Certificates of the program that produced `U`, in the order
    /// (scalar positivity, matrix `M_U`, improvement inequality if any).
    pub certificates: Vec<SosCertificate>,
    pub certificate_reports: Vec<CertificateReport>,
    pub status: DecompositionStatus,
    /// `ε_i` from the construction, paired with `basis.bound_basis`.
    pub epsilon: Vec<f64>,
    /// Constant removed by normalization: the solved potential is `u + shift`.
    pub normalization_shift: f64,
    pub diagnostics: Vec<SolverDiagnostics>,
}

impl DecompositionResult {
    pub fn defect_measure(&self) -> f64 {
        self.iterations.last().map(|r| r.defect_measure).unwrap_or(f64::NAN)
    }

    pub fn is_certified(&self) -> bool {
        self.status == DecompositionStatus::Certified
    }

    /// `Σ ε_i b_i`.
    pub fn lower_bound(&self) -> Polynomial {
        let n = self.field.nvars();
        let mut b = Polynomial::zero(n);
        for (m, &e) in self.basis.bound_basis.iter().zip(&self.epsilon) {
            b.add_term(m.clone(), e);
        }
        b
    }
}

/// `-∇U·f - |∇U|²`.
pub fn defect(u: &Polynomial, f: &VectorField) -> Polynomial {
    let g = u.gradient();
    let gf = g.dot(f).expect("potential and drift share the state dimension");
    -(&gf + &g.norm_squared())
}

/// Mean of the defect over the configured tensor grid.
pub fn defect_measure(u: &Polynomial, f: &VectorField, config: &DecomposeConfig) -> f64 {
    defect(u, f).grid_mean(&config.grid_axes(f.nvars())).expect("grid matches dimension")
}

/// `U - U(x_ref)`.
pub fn normalize(u: &Polynomial, x_ref: &[f64]) -> Polynomial {
    let shift = u.evaluate(x_ref).expect("reference point matches dimension");
    u - &Polynomial::constant(u.nvars(), shift)
}

/// Registers `U = c0 + Σ c_j p_j` with `c0 ≤ cap` and returns it with the
/// coefficient variables in basis order.
fn potential_ansatz(prog: &mut SosProgram, basis: &BasisSpec, cap: f64) -> (AffinePoly, Vec<VarId>) {
    let n = basis.nvars();
    let mut terms = Vec::with_capacity(basis.potential_basis.len());
    for m in &basis.potential_basis {
        let v = if m.is_constant() {
            prog.new_bounded_var("c0", None, Some(cap))
        } else {
            prog.new_var(format!("c[{m}]"))
        };
        terms.push((m.clone(), v));
    }
    let vars = terms.iter().map(|(_, v)| *v).collect();
    (AffinePoly::linear_combination(n, &terms), vars)
}

/// `[[-∇U·f, ∇Uᵀ], [∇U, I]]` with affine entries.
fn schur_matrix(grad: &[AffinePoly], f: &VectorField) -> Vec<Vec<AffinePoly>> {
    let n = f.nvars();
    let one = AffinePoly::from_poly(&Polynomial::constant(n, 1.0));
    let zero = AffinePoly::zero(n);
    let mut m = vec![vec![zero; n + 1]; n + 1];
    m[0][0] = -&AffinePoly::dot_polys(grad, f.components());
    for i in 0..n {
        m[0][i + 1] = grad[i].clone();
        m[i + 1][0] = grad[i].clone();
        m[i + 1][i + 1] = one.clone();
    }
    m
}

fn potential_from(basis: &BasisSpec, vars: &[VarId], sol: &SosSolution) -> Polynomial {
    let n = basis.nvars();
    let mut u = Polynomial::zero(n);
    for (m, v) in basis.potential_basis.iter().zip(vars) {
        u.add_term(m.clone(), sol.value(*v));
    }
    u
}

/// `None` when the returned point is usable. A stalled solve whose point
/// still passes the certificate checks is kept: the guarantees only need
/// feasibility, optimality just makes the step larger.
fn status_error(stage: Stage, sol: &SosSolution, cert_tol: f64) -> Option<DecomposeError> {
    match sol.status() {
        SdpStatus::Optimal => None,
        SdpStatus::NumericalFailure if sol.all_certified(cert_tol) && sol.values().iter().all(|v| v.is_finite()) => {
            warn!(
                "{stage}: solver stalled (gap {:.2e}) at a certified feasible point, keeping it",
                sol.sdp.duality_gap
            );
            None
        }
        SdpStatus::Infeasible => Some(DecomposeError::Infeasible { stage, detail: "solver certificate of infeasibility".into() }),
        SdpStatus::Unbounded => Some(DecomposeError::Unbounded { stage }),
        SdpStatus::NumericalFailure => Some(DecomposeError::SolverFailure {
            stage,
            detail: format!(
                "stalled after {} iterations, primal residual {:.2e}, gap {:.2e}",
                sol.sdp.iterations, sol.sdp.primal_residual, sol.sdp.duality_gap
            ),
        }),
    }
}

/// Maximizes `Σ ε_i` subject to `U - Σ ε_i b_i ∈ Σ`, `M_U ⪰ 0`, `ε ≥ 0`.
pub fn construct_initial(
    f: &VectorField,
    basis: &BasisSpec,
    config: &DecomposeConfig,
) -> Result<StageSolution, DecomposeError> {
    let stage = Stage::Construct;
    let sos_err = |source| DecomposeError::Sos { stage, source };
    let mut prog = SosProgram::new();
    let (u, cvars) = potential_ansatz(&mut prog, basis, config.constant_cap);

    let mut bounded = u.clone();
    let mut objective = AffineExpr::default();
    let mut evars = Vec::with_capacity(basis.bound_basis.len());
    for b in &basis.bound_basis {
        let e = prog.new_bounded_var(format!("eps[{b}]"), Some(0.0), None);
        bounded.add_term(b.clone(), &AffineExpr::term(e, -1.0));
        objective.add_var(e, 1.0);
        evars.push(e);
    }
    prog.add_scalar_sos("lower bound", &bounded).map_err(sos_err)?;
    prog.add_matrix_sos("M_U", &schur_matrix(&u.gradient(), f)).map_err(sos_err)?;
    prog.set_objective(Sense::Maximize, objective);

    let sol = prog.solve(&config.solver()).map_err(sos_err)?;
    let diag = SolverDiagnostics::from_solution(stage, &sol);
    debug!("construction: {:?}", diag);
    if let Some(e) = status_error(stage, &sol, config.certificate_tolerance) {
        return Err(e);
    }
    let epsilon: Vec<f64> = evars.iter().map(|&e| sol.value(e)).collect();
    let total: f64 = epsilon.iter().sum();
    if total < 1e-6 {
        // a constant U is always feasible, so a vanishing bound means no
        // Lyapunov function with any curvature exists in the basis
        return Err(DecomposeError::Infeasible {
            stage,
            detail: format!("optimal lower bound Σε = {total:.3e} is zero"),
        });
    }
    Ok(StageSolution {
        u: potential_from(basis, &cvars, &sol),
        epsilon,
        alpha: None,
        certificates: sol.certificates().to_vec(),
        reports: sol.reports().to_vec(),
        diagnostics: Some(diag),
    })
}

/// One improvement step around `(1 - interior_shrink) u_prev`. Falls back to `(u_prev, α = 1)`
/// when the solver does not return an optimal point.
pub fn iterate(
    f: &VectorField,
    u_prev: &Polynomial,
    basis: &BasisSpec,
    config: &DecomposeConfig,
) -> Result<StageSolution, DecomposeError> {
    let stage = Stage::Iterate;
    let sos_err = |source| DecomposeError::Sos { stage, source };
    let n = basis.nvars();
    let mut prog = SosProgram::new();
    let (u, cvars) = potential_ansatz(&mut prog, basis, config.constant_cap);
    let alpha = prog.new_bounded_var("alpha", Some(0.0), None);
    let eps = prog.new_bounded_var("eps", Some(config.epsilon_posdef), None);

    let sq: Polynomial = (0..n).map(|i| Polynomial::var(n, i).pow(2)).fold(Polynomial::zero(n), |a, b| &a + &b);
    let posdef = &u - &AffinePoly::poly_times_var(&sq, eps);
    prog.add_scalar_sos("positivity", &posdef).map_err(sos_err)?;
    let grad = u.gradient();
    prog.add_matrix_sos("M_U", &schur_matrix(&grad, f)).map_err(sos_err)?;

    // linearize around (1 - s) U_prev: its defect picks up s(1 - s)|∇U|², so
    // the program has strictly feasible points even when U_prev sits on
    // the boundary of M_U ⪰ 0, as the maximizer of the first stage does
    let g1 = u_prev.scale(1.0 - config.interior_shrink).gradient();
    let g1_sq = g1.norm_squared();
    let shifted = f.try_add(&g1.scale(2.0)).expect("same dimension");
    let h = &f.dot(&g1).expect("same dimension") + &g1_sq;
    let mut improve = AffinePoly::dot_polys(&grad, shifted.components());
    improve = &improve - &AffinePoly::poly_times_var(&h, alpha);
    improve = &improve - &AffinePoly::from_poly(&g1_sq);
    prog.add_scalar_sos("improvement", &improve).map_err(sos_err)?;
    prog.set_objective(Sense::Minimize, AffineExpr::var(alpha));

    let fallback = || StageSolution {
        u: u_prev.clone(),
        epsilon: Vec::new(),
        alpha: Some(1.0),
        certificates: Vec::new(),
        reports: Vec::new(),
        diagnostics: None,
    };
    let sol = match prog.solve(&config.solver()) {
        Ok(s) => s,
        Err(SosError::Sdp(e)) => {
            warn!("improvement step failed ({e}); keeping the previous potential");
            return Ok(fallback());
        }
        Err(e) => return Err(sos_err(e)),
    };
    let diag = SolverDiagnostics::from_solution(stage, &sol);
    debug!("improvement: {:?}", diag);
    if let Some(e) = status_error(stage, &sol, config.certificate_tolerance) {
        warn!("improvement step failed ({e}); keeping the previous potential");
        let mut out = fallback();
        out.diagnostics = Some(diag);
        return Ok(out);
    }
    let a = sol.value(alpha);
    if a > 1.0 {
        // (α = 1, U₂ = U₁) is feasible, so anything above it is solver noise
        // and carries no improvement guarantee
        info!("no improvement available (α = {a}); keeping the previous potential");
        let mut out = fallback();
        out.diagnostics = Some(diag);
        return Ok(out);
    }
    Ok(StageSolution {
        u: potential_from(basis, &cvars, &sol),
        epsilon: vec![sol.value(eps)],
        alpha: Some(a),
        certificates: sol.certificates().to_vec(),
        reports: sol.reports().to_vec(),
        diagnostics: Some(diag),
    })
}

/// Full pipeline with the basis selected from the drift.
/// Tighter constant bounds tried when the construction is not certified.
const CAP_RETRIES: usize = 2;

pub fn decompose(f: &VectorField, config: &DecomposeConfig) -> Result<DecompositionResult, DecomposeError> {
    let basis = BasisSpec::for_field(f)?;
    decompose_with_basis(f, &basis, config)
}

pub fn decompose_with_basis(
    f: &VectorField,
    basis: &BasisSpec,
    config: &DecomposeConfig,
) -> Result<DecompositionResult, DecomposeError> {
    let n = f.nvars();
    config.validate(n)?;
    if basis.nvars() != n {
        return Err(DecomposeError::InvalidConfig(format!(
            "basis has {} variables, drift has {n}",
            basis.nvars()
        )));
    }
    info!("basis: {} potential monomials, {} bound monomials", basis.potential_basis.len(), basis.bound_basis.len());

    // a large constant bound degrades the conditioning of the construction;
    // when its certificates fail, retry with a tighter one
    let mut local = config.clone();
    let mut init = construct_initial(f, basis, &local)?;
    for _ in 0..CAP_RETRIES {
        if init.reports.iter().all(|r| r.is_valid(local.certificate_tolerance)) {
            break;
        }
        local.constant_cap /= 10.0;
        warn!("construction not certified, retrying with constant_cap = {:e}", local.constant_cap);
        match construct_initial(f, basis, &local) {
            Ok(next) => init = next,
            Err(e) => {
                debug!("retry failed: {e}");
                local.constant_cap *= 10.0;
                break;
            }
        }
    }
    let config = &local;
    let epsilon = init.epsilon.clone();
    let mut diagnostics: Vec<SolverDiagnostics> = init.diagnostics.into_iter().collect();
    let mut measure = defect_measure(&init.u, f, config);
    let mut iterations = vec![IterationRecord { alpha: None, defect_measure: measure }];
    let mut current = init;
    info!("initial construction: defect measure {measure:.6e}");

    for k in 1..=config.max_iterations {
        let step = iterate(f, &current.u, basis, config)?;
        diagnostics.extend(step.diagnostics);
        let alpha = step.alpha.unwrap_or(1.0);
        if step.certificates.is_empty() {
            iterations.push(IterationRecord { alpha: Some(1.0), defect_measure: measure });
            break;
        }
        if !step.reports.iter().all(|r| r.is_valid(config.certificate_tolerance)) {
            debug!("iteration {k}: returned certificates fail the check, step discarded");
            break;
        }
        let next = defect_measure(&step.u, f, config);
        if next > measure {
            // the lemma guarantees a pointwise decrease, so any rise is solver noise
            debug!("iteration {k}: defect measure rose from {measure:.6e} to {next:.6e}, step discarded");
            break;
        }
        let rel = if measure > 0.0 { (measure - next) / measure } else { 0.0 };
        info!("iteration {k}: alpha {alpha:.6}, defect measure {next:.6e}");
        iterations.push(IterationRecord { alpha: Some(alpha), defect_measure: next });
        measure = next;
        current = step;
        if alpha >= config.alpha_stop || rel < config.defect_stop {
            break;
        }
    }

    let solved = current.u;
    let normalized = match &config.normalization_point {
        Some(x) => normalize(&solved, x),
        None => normalize(&solved, &vec![0.0; n]),
    };
    let normalization_shift = (&solved - &normalized).constant_term();
    let f_u = f.try_add(&normalized.gradient()).expect("same dimension");
    let status = if !current.reports.is_empty()
        && current.reports.iter().all(|r| r.is_valid(config.certificate_tolerance))
    {
        DecompositionStatus::Certified
    } else {
        DecompositionStatus::Uncertified
    };
    Ok(DecompositionResult {
        field: f.clone(),
        basis: basis.clone(),
        defect: defect(&normalized, f),
        u: normalized,
        f_u,
        iterations,
        certificates: current.certificates,
        certificate_reports: current.reports,
        status,
        epsilon,
        normalization_shift,
        diagnostics,
    })
}
