//! Polynomial quasi-potential landscapes for stochastic dynamical systems.
//!
//! For a drift `f` with additive isotropic noise, [`decompose`] searches for
//! a polynomial potential `U` such that `f = -∇U + f_U` with
//! `∇U · f_U ≤ 0` everywhere, certified through sum-of-squares programs.
//! `U` is then a Lyapunov function and `4 (U(x) - U(a))` lower-bounds the
//! quasi-potential; [`paths`] supplies the matching upper bounds and a
//! brute-force action minimizer, and [`linear_oracle`] the closed-form
//! answers for linear drifts.

// links the system BLAS/LAPACK used by the SDP backend
extern crate openblas_src;

pub mod basis;
pub mod decompose;
pub mod linear_oracle;
pub mod paths;
pub mod poly;
pub mod report;
pub mod sos;
pub mod system;

pub use basis::BasisSpec;
pub use decompose::{decompose, DecomposeConfig, DecompositionResult};
pub use poly::{Monomial, Polynomial, VectorField};
