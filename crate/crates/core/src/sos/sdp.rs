//! Standard-form semidefinite programs and the solver contract.
//!
//! A problem has free scalar variables, symmetric PSD matrix blocks, linear
//! equalities over both, and a linear objective. Block entries are addressed
//! by their upper-triangle position `(row <= col)` and carry the actual
//! matrix entry, so an off-diagonal variable contributes to two positions of
//! the symmetric matrix.
//!
//! # Text dump
//!
//! [`SdpProblem::dump`] writes a line-oriented sparse format:
//!
//! ```text
//! sdp 1
//! sense minimize|maximize
//! free <n_free>
//! blocks <n_blocks> <size_0> <size_1> ...
//! objective <nnz>
//! f <index> <coef>                 # free-variable entry
//! b <block> <row> <col> <coef>     # block entry, row <= col
//! equalities <m>
//! eq <k> <nnz> <rhs>
//! f ... / b ...                    # <nnz> entry lines follow
//! ```
//!
//! Indices are zero-based and numbers use Rust's shortest round-trip form.

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SdpVar {
    Free(usize),
    Block { block: usize, row: usize, col: usize },
}

impl SdpVar {
    /// Block entry with indices normalized to the upper triangle.
    pub fn entry(block: usize, i: usize, j: usize) -> Self {
        SdpVar::Block { block, row: i.min(j), col: i.max(j) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub entries: Vec<(SdpVar, f64)>,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub num_free: usize,
    pub block_sizes: Vec<usize>,
    pub equalities: Vec<LinearRow>,
    pub objective: Vec<(SdpVar, f64)>,
    pub sense: Sense,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SdpError {
    #[error("equality {row} references undeclared variable {var:?}")]
    UndeclaredVariable { row: usize, var: SdpVar },
    #[error("solver backend failure: {0}")]
    Backend(String),
}

impl SdpProblem {
    pub fn new(sense: Sense) -> Self {
        Self { num_free: 0, block_sizes: Vec::new(), equalities: Vec::new(), objective: Vec::new(), sense }
    }

    pub fn validate(&self) -> Result<(), SdpError> {
        let check = |row: usize, v: &SdpVar| -> Result<(), SdpError> {
            let ok = match *v {
                SdpVar::Free(i) => i < self.num_free,
                SdpVar::Block { block, row, col } => {
                    block < self.block_sizes.len() && row <= col && col < self.block_sizes[block]
                }
            };
            if ok {
                Ok(())
            } else {
                Err(SdpError::UndeclaredVariable { row, var: *v })
            }
        };
        for (k, eq) in self.equalities.iter().enumerate() {
            for (v, _) in &eq.entries {
                check(k, v)?;
            }
        }
        for (v, _) in &self.objective {
            check(usize::MAX, v)?;
        }
        Ok(())
    }

    /// Value of `var` given free values and block matrices.
    fn value_of(var: SdpVar, free: &[f64], blocks: &[DMatrix<f64>]) -> f64 {
        match var {
            SdpVar::Free(i) => free[i],
            SdpVar::Block { block, row, col } => blocks[block][(row, col)],
        }
    }

    /// Largest absolute equality violation at the given point.
    pub fn max_equality_residual(&self, free: &[f64], blocks: &[DMatrix<f64>]) -> f64 {
        self.equalities
            .iter()
            .map(|eq| {
                let lhs: f64 = eq.entries.iter().map(|&(v, c)| c * Self::value_of(v, free, blocks)).sum();
                (lhs - eq.rhs).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn objective_value(&self, free: &[f64], blocks: &[DMatrix<f64>]) -> f64 {
        self.objective.iter().map(|&(v, c)| c * Self::value_of(v, free, blocks)).sum()
    }

    pub fn dump(&self) -> String {
        let mut s = String::new();
        let entry = |s: &mut String, v: &SdpVar, c: f64| {
            match *v {
                SdpVar::Free(i) => writeln!(s, "f {i} {c:?}"),
                SdpVar::Block { block, row, col } => writeln!(s, "b {block} {row} {col} {c:?}"),
            }
            .unwrap()
        };
        writeln!(s, "sdp 1").unwrap();
        let sense = match self.sense {
            Sense::Minimize => "minimize",
            Sense::Maximize => "maximize",
        };
        writeln!(s, "sense {sense}").unwrap();
        writeln!(s, "free {}", self.num_free).unwrap();
        write!(s, "blocks {}", self.block_sizes.len()).unwrap();
        for b in &self.block_sizes {
            write!(s, " {b}").unwrap();
        }
        writeln!(s).unwrap();
        writeln!(s, "objective {}", self.objective.len()).unwrap();
        for (v, c) in &self.objective {
            entry(&mut s, v, *c);
        }
        writeln!(s, "equalities {}", self.equalities.len()).unwrap();
        for (k, eq) in self.equalities.iter().enumerate() {
            writeln!(s, "eq {k} {} {:?}", eq.entries.len(), eq.rhs).unwrap();
            for (v, c) in &eq.entries {
                entry(&mut s, v, *c);
            }
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SdpStatus,
    /// Set when the backend stopped at relaxed tolerances.
    pub reduced_accuracy: bool,
    pub free: Vec<f64>,
    pub blocks: Vec<DMatrix<f64>>,
    pub objective: f64,
    /// `max |A x - b|` over the equalities at the returned point.
    pub max_equality_residual: f64,
    /// Smallest eigenvalue over all PSD blocks at the returned point.
    pub min_eigenvalue: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub duality_gap: f64,
    pub iterations: u32,
}

impl SdpSolution {
    /// Fills in the residual diagnostics from the returned point.
    pub fn with_diagnostics(mut self, problem: &SdpProblem) -> Self {
        self.max_equality_residual = problem.max_equality_residual(&self.free, &self.blocks);
        self.min_eigenvalue = self
            .blocks
            .iter()
            .map(min_eigenvalue)
            .fold(f64::INFINITY, f64::min);
        self
    }
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return f64::INFINITY;
    }
    SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Anything that can solve linear-objective, linear-equality, PSD-cone problems.
pub trait SdpSolver: Send + Sync {
    fn solve(&self, problem: &SdpProblem) -> Result<SdpSolution, SdpError>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_lists_blocks_and_triplets() {
        let mut p = SdpProblem::new(Sense::Maximize);
        p.num_free = 1;
        p.block_sizes = vec![2];
        p.objective = vec![(SdpVar::Free(0), 1.0)];
        p.equalities.push(LinearRow {
            entries: vec![(SdpVar::Free(0), 1.0), (SdpVar::entry(0, 1, 0), -2.0)],
            rhs: 0.5,
        });
        let text = p.dump();
        assert!(text.contains("blocks 1 2\n"));
        assert!(text.contains("eq 0 2 0.5\n"));
        assert!(text.contains("b 0 0 1 -2.0\n"));
        assert!(p.validate().is_ok());
    }

    #[test]
    fn validate_catches_out_of_range_entries() {
        let mut p = SdpProblem::new(Sense::Minimize);
        p.block_sizes = vec![2];
        p.equalities.push(LinearRow { entries: vec![(SdpVar::entry(0, 2, 0), 1.0)], rhs: 0.0 });
        assert!(matches!(p.validate(), Err(SdpError::UndeclaredVariable { row: 0, .. })));
    }
}
