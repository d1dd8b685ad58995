//! [`SdpSolver`] backed by the Clarabel interior-point solver.
//!
//! Variables are laid out as `[free | svec(block_0) | svec(block_1) | ...]`
//! where each `svec` walks the upper triangle column by column. Clarabel's
//! PSD cone expects off-diagonals scaled by `√2`, applied in the cone rows.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::DMatrix;

use super::sdp::{SdpError, SdpProblem, SdpSolution, SdpSolver, SdpStatus, SdpVar, Sense};

#[derive(Debug, Clone)]
pub struct ClarabelSolver {
    /// Gap and feasibility tolerance handed to the interior-point method.
    pub tolerance: f64,
    pub max_iter: u32,
    pub verbose: bool,
}

impl Default for ClarabelSolver {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_iter: 400, verbose: false }
    }
}

struct Layout {
    offsets: Vec<usize>,
    total: usize,
}

impl Layout {
    fn new(problem: &SdpProblem) -> Self {
        let mut offsets = Vec::with_capacity(problem.block_sizes.len());
        let mut total = problem.num_free;
        for &n in &problem.block_sizes {
            offsets.push(total);
            total += n * (n + 1) / 2;
        }
        Self { offsets, total }
    }

    fn index(&self, var: SdpVar) -> usize {
        match var {
            SdpVar::Free(i) => i,
            SdpVar::Block { block, row, col } => self.offsets[block] + col * (col + 1) / 2 + row,
        }
    }
}

/// Column-wise triplet accumulator for the constraint matrix.
struct Triplets {
    cols: Vec<Vec<(usize, f64)>>,
}

impl Triplets {
    fn new(ncols: usize) -> Self {
        Self { cols: vec![Vec::new(); ncols] }
    }

    fn push(&mut self, row: usize, col: usize, v: f64) {
        if v != 0.0 {
            self.cols[col].push((row, v));
        }
    }

    fn into_csc(mut self, nrows: usize) -> CscMatrix<f64> {
        let mut colptr = Vec::with_capacity(self.cols.len() + 1);
        let mut rowval = Vec::new();
        let mut nzval = Vec::new();
        colptr.push(0);
        for col in &mut self.cols {
            col.sort_by_key(|&(r, _)| r);
            let mut last: Option<usize> = None;
            for &(r, v) in col.iter() {
                if last == Some(r) {
                    *nzval.last_mut().unwrap() += v;
                } else {
                    rowval.push(r);
                    nzval.push(v);
                    last = Some(r);
                }
            }
            colptr.push(rowval.len());
        }
        CscMatrix::new(nrows, self.cols.len(), colptr, rowval, nzval)
    }
}

impl SdpSolver for ClarabelSolver {
    fn solve(&self, problem: &SdpProblem) -> Result<SdpSolution, SdpError> {
        problem.validate()?;
        let layout = Layout::new(problem);
        let nx = layout.total;

        let mut q = vec![0.0; nx];
        let sign = match problem.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        for &(v, c) in &problem.objective {
            q[layout.index(v)] += sign * c;
        }

        let mut a = Triplets::new(nx);
        let mut b = Vec::new();
        let mut cones = Vec::new();
        let m_eq = problem.equalities.len();
        for (r, eq) in problem.equalities.iter().enumerate() {
            for &(v, c) in &eq.entries {
                a.push(r, layout.index(v), c);
            }
            b.push(eq.rhs);
        }
        if m_eq > 0 {
            cones.push(SupportedConeT::ZeroConeT(m_eq));
        }
        let mut row = m_eq;
        let sqrt2 = std::f64::consts::SQRT_2;
        for (k, &n) in problem.block_sizes.iter().enumerate() {
            for col in 0..n {
                for r in 0..=col {
                    let scale = if r == col { 1.0 } else { sqrt2 };
                    a.push(row, layout.index(SdpVar::Block { block: k, row: r, col }), -scale);
                    b.push(0.0);
                    row += 1;
                }
            }
            if n == 1 {
                cones.push(SupportedConeT::NonnegativeConeT(1));
            } else {
                cones.push(SupportedConeT::PSDTriangleConeT(n));
            }
        }
        let a = a.into_csc(row);
        let p = CscMatrix::zeros((nx, nx));

        let settings = DefaultSettingsBuilder::default()
            .verbose(self.verbose)
            .max_iter(self.max_iter)
            .tol_gap_abs(self.tolerance)
            .tol_gap_rel(self.tolerance)
            .tol_feas(self.tolerance)
            .build()
            .map_err(|e| SdpError::Backend(format!("{e:?}")))?;
        let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings)
            .map_err(|e| SdpError::Backend(format!("{e:?}")))?;
        solver.solve();
        let sol = &solver.solution;
        let info = &solver.info;

        let (status, reduced_accuracy) = match sol.status {
            SolverStatus::Solved => (SdpStatus::Optimal, false),
            SolverStatus::AlmostSolved => (SdpStatus::Optimal, true),
            SolverStatus::PrimalInfeasible => (SdpStatus::Infeasible, false),
            SolverStatus::AlmostPrimalInfeasible => (SdpStatus::Infeasible, true),
            SolverStatus::DualInfeasible => (SdpStatus::Unbounded, false),
            SolverStatus::AlmostDualInfeasible => (SdpStatus::Unbounded, true),
            _ => (SdpStatus::NumericalFailure, true),
        };

        let x = &sol.x;
        let free = x[..problem.num_free].to_vec();
        let blocks = problem
            .block_sizes
            .iter()
            .enumerate()
            .map(|(k, &n)| {
                DMatrix::from_fn(n, n, |i, j| x[layout.index(SdpVar::entry(k, i, j))])
            })
            .collect::<Vec<_>>();
        let objective = problem.objective_value(&free, &blocks);
        Ok(SdpSolution {
            status,
            reduced_accuracy,
            free,
            blocks,
            objective,
            max_equality_residual: 0.0,
            min_eigenvalue: 0.0,
            primal_residual: info.res_primal,
            dual_residual: info.res_dual,
            duality_gap: info.gap_abs,
            iterations: info.iterations,
        }
        .with_diagnostics(problem))
    }
}
