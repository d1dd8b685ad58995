use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qpot::poly::{Monomial, Polynomial};
use qpot::sos::{gram_basis, min_eigenvalue, AffinePoly, ClarabelSolver, SdpStatus, SosProgram};

/// `zᵀ L Lᵀ z` for the full monomial vector `z` of degree ≤ `d`.
fn random_sos(n: usize, d: u32, seed: u64) -> Polynomial {
    let z = Monomial::all_up_to(n, d);
    let k = z.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
    let q = &l * l.transpose();
    let mut p = Polynomial::zero(n);
    for i in 0..k {
        for j in 0..k {
            p.add_term(z[i].mul(&z[j]), q[(i, j)]);
        }
    }
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solved_gram_matrix_reproduces_polynomial(n in 1usize..=2, d in 1u32..=2, seed in any::<u64>()) {
        let p = random_sos(n, d, seed);
        let mut prog = SosProgram::new();
        let h = prog.add_scalar_sos("p", &AffinePoly::from_poly(&p)).unwrap();
        let sol = prog.solve(&ClarabelSolver::default()).unwrap();
        prop_assert!(matches!(sol.status(), SdpStatus::Optimal | SdpStatus::NumericalFailure));
        prop_assert!(sol.sdp.primal_residual <= 1e-6 && sol.sdp.dual_residual <= 1e-6,
            "residuals {} {}", sol.sdp.primal_residual, sol.sdp.dual_residual);
        let cert = sol.certificate(h);
        prop_assert!(min_eigenvalue(&cert.gram_matrix) >= -1e-6);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for _ in 0..100 {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let zx = DVector::from_iterator(cert.gram_basis.len(), cert.gram_basis.iter().map(|m| m.evaluate(&x)));
            let ztqz = zx.dot(&(&cert.gram_matrix * &zx));
            prop_assert!((ztqz - p.evaluate(&x).unwrap()).abs() < 1e-6, "{ztqz} at {x:?}");
        }
    }

    #[test]
    fn schur_complement_sign(a in -4.0f64..4.0, g in prop::collection::vec(-2.0f64..2.0, 1..4)) {
        // [[a, gᵀ], [g, I]] ⪰ 0  ⇔  a - |g|² ≥ 0
        let k = g.len();
        let mut m = DMatrix::identity(k + 1, k + 1);
        m[(0, 0)] = a;
        for i in 0..k {
            m[(0, i + 1)] = g[i];
            m[(i + 1, 0)] = g[i];
        }
        let schur = a - g.iter().map(|v| v * v).sum::<f64>();
        prop_assume!(schur.abs() > 1e-9);
        prop_assert_eq!(min_eigenvalue(&m) >= 0.0, schur >= 0.0);
    }

    #[test]
    fn gram_basis_covers_squares(n in 1usize..=3, d in 1u32..=3) {
        let z = gram_basis(2 * d, n, None);
        prop_assert!(Monomial::all_up_to(n, d).iter().all(|m| z.contains(m)));
    }
}
