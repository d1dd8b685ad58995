//! Closed-form decompositions for linear drift `f(x) = A x`.
//!
//! With `S` the controllability Gramian (`A S + S Aᵀ = -I`), the gradient part
//! `A_g = -½ S⁻¹` gives an orthogonal split `A = A_g + A_c` and the potential
//! `U = -½ xᵀ A_g x`. `P = -A_g` is the maximal solution of
//! `P A + Aᵀ P + 2 P² = 0`.

use std::time::Instant;

use log::warn;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decompose::{decompose, DecomposeConfig, DecomposeError};
use crate::poly::{Monomial, Polynomial, VectorField};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinearError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not stable: spectral abscissa {abscissa:.6e} >= 0")]
    NotStable { abscissa: f64 },
    #[error("matrix is not normal (‖AAᵀ - AᵀA‖_F = {residual:.3e}); use the Gramian construction")]
    NotNormal { residual: f64 },
    #[error("Gramian is singular")]
    Singular,
    #[error("potential is not a quadratic form: {0}")]
    NotQuadratic(String),
}

/// Stable linear drift `ẋ = A x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    a: DMatrix<f64>,
}

impl LinearSystem {
    pub fn new(a: DMatrix<f64>) -> Result<Self, LinearError> {
        if a.nrows() != a.ncols() {
            return Err(LinearError::NotSquare { rows: a.nrows(), cols: a.ncols() });
        }
        let abscissa = spectral_abscissa(&a);
        if !(abscissa < 0.0) {
            return Err(LinearError::NotStable { abscissa });
        }
        Ok(Self { a })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn field(&self) -> VectorField {
        VectorField::linear(&self.a)
    }
}

pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

/// `A = A_g + A_c` with symmetric `A_g`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDecomposition {
    pub a_g: DMatrix<f64>,
    pub a_c: DMatrix<f64>,
}

impl LinearDecomposition {
    pub fn from_gradient_part(a: &DMatrix<f64>, a_g: DMatrix<f64>) -> Self {
        let a_c = a - &a_g;
        Self { a_g, a_c }
    }

    /// `U(x) = -½ xᵀ A_g x`.
    pub fn potential(&self) -> Polynomial {
        let n = self.a_g.nrows();
        let mut u = Polynomial::zero(n);
        for i in 0..n {
            for j in i..n {
                let m = Monomial::var(n, i).mul(&Monomial::var(n, j));
                let c = if i == j { -0.5 * self.a_g[(i, i)] } else { -self.a_g[(i, j)] };
                u.add_term(m, c);
            }
        }
        u
    }
}

/// `A_g = -Hess(U)` for a quadratic potential. Terms of degree other than
/// two are rejected, except a constant.
pub fn gradient_part_from_potential(u: &Polynomial) -> Result<DMatrix<f64>, LinearError> {
    let n = u.nvars();
    let mut a_g = DMatrix::zeros(n, n);
    for (m, c) in u.terms() {
        match m.degree() {
            0 => {}
            2 => {
                let idx: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat_n(i, m.exponent(i) as usize)).collect();
                let (i, j) = (idx[0], idx[1]);
                if i == j {
                    a_g[(i, i)] = -2.0 * c;
                } else {
                    a_g[(i, j)] = -c;
                    a_g[(j, i)] = -c;
                }
            }
            _ => return Err(LinearError::NotQuadratic(format!("term {c} * {m}"))),
        }
    }
    Ok(a_g)
}

/// Solves `A S + S Aᵀ = C` for real `A` via the complex Schur form.
pub fn solve_lyapunov(a: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let ac = a.map(|x| Complex64::new(x, 0.0));
    let (q, t) = ac.schur().unpack();
    let qh = q.adjoint();
    let cc = &qh * c.map(|x| Complex64::new(x, 0.0)) * &q;

    // T Y + Y Tᴴ = C̃ with T upper triangular, filled from the bottom-right
    let mut y = DMatrix::<Complex64>::zeros(n, n);
    for i in (0..n).rev() {
        for j in (0..n).rev() {
            let mut rhs = cc[(i, j)];
            for k in i + 1..n {
                rhs -= t[(i, k)] * y[(k, j)];
            }
            for k in j + 1..n {
                rhs -= y[(i, k)] * t[(j, k)].conj();
            }
            y[(i, j)] = rhs / (t[(i, i)] + t[(j, j)].conj());
        }
    }
    let s = (&q * y * &qh).map(|z| z.re);
    (&s + s.transpose()) * 0.5
}

/// Orthogonal decomposition from the controllability Gramian.
pub fn gramian_potential(sys: &LinearSystem) -> Result<LinearDecomposition, LinearError> {
    let a = sys.matrix();
    let n = sys.dim();
    let s = solve_lyapunov(a, &(-DMatrix::identity(n, n)));
    let eig = s.clone().symmetric_eigenvalues();
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v.abs()), hi.max(v.abs())));
    if lo == 0.0 {
        return Err(LinearError::Singular);
    }
    let cond = hi / lo;
    if cond > 1e10 {
        warn!("Gramian is ill-conditioned (condition number {cond:.3e})");
    }
    let s_inv = s.try_inverse().ok_or(LinearError::Singular)?;
    let a_g = s_inv * -0.5;
    let a_g = (&a_g + a_g.transpose()) * 0.5;
    Ok(LinearDecomposition::from_gradient_part(a, a_g))
}

/// `½(A + Aᵀ)`, valid when `A` is normal.
pub fn normal_case_potential(a: &DMatrix<f64>) -> Result<DMatrix<f64>, LinearError> {
    let residual = (a * a.transpose() - a.transpose() * a).norm();
    if residual > 1e-10 * a.norm_squared().max(1.0) {
        return Err(LinearError::NotNormal { residual });
    }
    Ok((a + a.transpose()) * 0.5)
}

/// `‖P A + Aᵀ P + 2 P²‖_F / ‖A‖_F`.
pub fn riccati_residual(p: &DMatrix<f64>, a: &DMatrix<f64>) -> f64 {
    (p * a + a.transpose() * p + p * p * 2.0).norm() / a.norm()
}

/// `B - (μ(B) + ½) I` with standard-normal `B` and `μ` its spectral abscissa.
pub fn random_stable_matrix(n: usize, seed: u64) -> LinearSystem {
    assert!(n >= 1, "dimension must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
    let mu = spectral_abscissa(&b);
    let a = b - DMatrix::identity(n, n) * (mu + 0.5);
    LinearSystem::new(a).expect("shifted matrix has abscissa -0.5")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearReport {
    /// `‖A_g - A_gᵀ‖_F`.
    pub symmetry_residual: f64,
    /// `max |Re λ(A_c)|`.
    pub max_real_eig_ac: f64,
    /// `‖A_g A_c + (A_g A_c)ᵀ‖_F`.
    pub antisymmetry_residual: f64,
}

impl LinearReport {
    pub fn is_orthogonal(&self, tol: f64) -> bool {
        self.symmetry_residual <= tol && self.max_real_eig_ac <= tol && self.antisymmetry_residual <= tol
    }
}

pub fn verify_linear_decomposition(a: &DMatrix<f64>, a_g: &DMatrix<f64>) -> LinearReport {
    let a_c = a - a_g;
    let prod = a_g * &a_c;
    LinearReport {
        symmetry_residual: (a_g - a_g.transpose()).norm(),
        max_real_eig_ac: a_c.complex_eigenvalues().iter().map(|z| z.re.abs()).fold(0.0, f64::max),
        antisymmetry_residual: (&prod + prod.transpose()).norm(),
    }
}

/// One random system of the scaling benchmark, decomposed and compared
/// against the Gramian construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkCase {
    pub n: usize,
    pub seed: u64,
    /// Wall time of the decomposition.
    pub seconds: f64,
    /// Improvement steps taken after the construction.
    pub iterations: usize,
    /// `‖A_g - A_g*‖_F / ‖A_g*‖_F` against the Gramian answer `A_g*`.
    pub relative_error: f64,
    /// [`riccati_residual`] of `P = -A_g`.
    pub riccati_residual: f64,
    pub certified: bool,
}

pub fn benchmark_case(n: usize, seed: u64, cfg: &DecomposeConfig) -> Result<BenchmarkCase, DecomposeError> {
    let sys = random_stable_matrix(n, seed);
    let start = Instant::now();
    let result = decompose(&sys.field(), cfg)?;
    let seconds = start.elapsed().as_secs_f64();
    let exact = gramian_potential(&sys)
        .map_err(|e| DecomposeError::InvalidConfig(format!("Gramian oracle: {e}")))?
        .a_g;
    let a_g = gradient_part_from_potential(&result.u)
        .map_err(|e| DecomposeError::InvalidConfig(format!("non-quadratic potential: {e}")))?;
    Ok(BenchmarkCase {
        n,
        seed,
        seconds,
        iterations: result.iterations.len().saturating_sub(1),
        relative_error: (&a_g - &exact).norm() / exact.norm(),
        riccati_residual: riccati_residual(&(-&a_g), sys.matrix()),
        certified: result.is_certified(),
    })
}

/// Median wall time per dimension, in increasing `n`.
pub fn median_times(cases: &[BenchmarkCase]) -> Vec<(usize, f64)> {
    let mut dims: Vec<usize> = cases.iter().map(|c| c.n).collect();
    dims.sort_unstable();
    dims.dedup();
    dims.into_iter()
        .map(|n| {
            let mut t: Vec<f64> = cases.iter().filter(|c| c.n == n).map(|c| c.seconds).collect();
            t.sort_by(f64::total_cmp);
            let k = t.len();
            let med = if k % 2 == 1 { t[k / 2] } else { 0.5 * (t[k / 2 - 1] + t[k / 2]) };
            (n, med)
        })
        .collect()
}

/// Dense `vec`-form of the Lyapunov operator, for cross-checks.
pub fn lyapunov_kronecker(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    id.kronecker(a) + a.kronecker(&id)
}

/// Column-major `vec` of a matrix.
pub fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}
