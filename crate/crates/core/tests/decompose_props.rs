use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qpot::basis::BasisSpec;
use qpot::decompose::{construct_initial, decompose, defect, iterate, normalize, DecomposeConfig};
use qpot::linear_oracle::random_stable_matrix;
use qpot::poly::{parse_polynomial, Monomial, Polynomial, VectorField};
use qpot::sos::{min_eigenvalue, SosCertificate};

fn field(n: usize, comps: &[String]) -> VectorField {
    VectorField::new(comps.iter().map(|c| parse_polynomial(c, n).unwrap()).collect()).unwrap()
}

fn maier_stein(mu: f64, gamma: f64) -> VectorField {
    field(2, &[format!("x1 - x1^3 - {gamma}*x1*x2^2"), format!("-{mu}*(1 + x1^2)*x2")])
}

/// `f = -p'` for a quartic `p` with positive leading coefficient.
fn gradient_1d(a: f64, b: f64, c: f64, e: f64) -> VectorField {
    field(1, &[format!("-({a}*x1^3 + {b}*x1^2 + {c}*x1 + {e})")])
}

fn system() -> impl Strategy<Value = VectorField> {
    prop_oneof![
        (0.5f64..3.0, 0.5f64..10.0).prop_map(|(mu, gamma)| maier_stein(mu, gamma)),
        (2usize..=3, any::<u64>()).prop_map(|(n, seed)| random_stable_matrix(n, seed).field()),
        (0.2f64..2.0, -1.0f64..1.0, -2.0f64..2.0, -1.0f64..1.0).prop_map(|(a, b, c, e)| gradient_1d(a, b, c, e)),
    ]
}

fn sample_points(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).collect()
}

fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// What a certificate accepted at `tol` guarantees at `pt`. With `p` the
/// certified polynomial, `p - zᵀQz` has coefficients below `tol` and
/// `λ_min(Q) ≥ -tol`, so `p(pt) ≥ -tol (|z(pt)|² + Σ_α |pt^α|)`.
struct Slack {
    expanded: Polynomial,
    basis: Vec<Monomial>,
    support: Vec<Monomial>,
    tol: f64,
}

impl Slack {
    fn new(certs: &[SosCertificate], label: &str, tol: f64) -> Self {
        let cert = certs.iter().find(|c| c.label == label).unwrap_or_else(|| panic!("no `{label}` certificate"));
        let expanded = cert.expand();
        Self { basis: cert.gram_basis.clone(), support: expanded.monomials().cloned().collect(), expanded, tol }
    }

    fn at(&self, pt: &[f64]) -> f64 {
        let z: f64 = self.basis.iter().map(|m| m.evaluate(pt).powi(2)).sum();
        let terms: f64 = self.support.iter().map(|m| m.evaluate(pt).abs()).sum();
        self.tol * (z + terms)
    }
}

/// `(x, 1, -∇U(x))`, where the scalarized `M_U` equals the defect.
fn schur_point(x: &[f64], grad: &[f64]) -> Vec<f64> {
    let mut pt = x.to_vec();
    pt.push(1.0);
    pt.extend(grad.iter().map(|g| -g));
    pt
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn decomposition_invariants(f in system(), seed in any::<u64>()) {
        let cfg = DecomposeConfig::default();
        let r = decompose(&f, &cfg).unwrap();
        prop_assert!(r.is_certified());
        let n = f.nvars();

        // f + ∇U - f_U vanishes identically
        let residual = f.try_add(&r.u.gradient()).unwrap().try_sub(&r.f_u).unwrap();
        prop_assert!(residual.is_zero());

        let grad = r.u.gradient().compile();
        let fc = f.compile();
        let d = r.defect.clone();
        let slack = Slack::new(&r.certificates, "M_U", cfg.certificate_tolerance);
        for x in sample_points(n, 10_000, seed) {
            let dx = d.evaluate(&x).unwrap();
            let g = grad.evaluate(&x);
            let tol = slack.at(&schur_point(&x, &g));
            let pt = schur_point(&x, &g);
            let gram = slack.expanded.evaluate(&pt).unwrap();
            prop_assert!((gram - dx).abs() <= tol, "zᵀQz = {gram} but defect {dx} at {x:?}");
            prop_assert!(dx >= -tol, "defect {dx} at {x:?} (slack {tol:e})");
            // ∇U·f = -defect - |∇U|²
            let fx = fc.evaluate(&x);
            let descent: f64 = g.iter().zip(&fx).map(|(a, b)| a * b).sum();
            prop_assert!(descent <= tol, "∇U·f = {descent} at {x:?}");
        }

        // Schur form and defect agree on where the certificate holds
        for x in sample_points(n, 100, seed ^ 1) {
            let g = grad.evaluate(&x);
            let fx = fc.evaluate(&x);
            let mut m = DMatrix::identity(n + 1, n + 1);
            m[(0, 0)] = -g.iter().zip(&fx).map(|(a, b)| a * b).sum::<f64>();
            for i in 0..n {
                m[(0, i + 1)] = g[i];
                m[(i + 1, 0)] = g[i];
            }
            let schur_ok = min_eigenvalue(&m) >= -1e-6;
            let defect_ok = d.evaluate(&x).unwrap() >= -1e-6 * (1.0 + norm_sq(&g));
            prop_assert_eq!(schur_ok, defect_ok, "at {:?}", x);
        }

        prop_assert!(r.iterations.windows(2).all(|w| w[1].defect_measure <= w[0].defect_measure));
        prop_assert!(r.iterations.iter().filter_map(|i| i.alpha).all(|a| a <= 1.0 + 1e-6));
    }

    #[test]
    fn stage_certificates_hold_pointwise(f in system(), seed in any::<u64>()) {
        let cfg = DecomposeConfig::default();
        let n = f.nvars();
        let basis = BasisSpec::for_field(&f).unwrap();
        let first = construct_initial(&f, &basis, &cfg).unwrap();
        let mut bound = Polynomial::zero(n);
        for (m, &e) in basis.bound_basis.iter().zip(&first.epsilon) {
            bound.add_term(m.clone(), e);
        }
        let lower = Slack::new(&first.certificates, "lower bound", cfg.certificate_tolerance);
        for x in sample_points(n, 1000, seed) {
            let gap = first.u.evaluate(&x).unwrap() - bound.evaluate(&x).unwrap();
            prop_assert!(gap >= -lower.at(&x), "U - Σεb = {gap} at {x:?}");
        }

        let next = iterate(&f, &first.u, &basis, &cfg).unwrap();
        let alpha = next.alpha.unwrap();
        prop_assert!(alpha <= 1.0 + 1e-6);
        // steps whose certificates fail the check are discarded by `decompose`
        let certified = !next.reports.is_empty()
            && next.reports.iter().all(|r| r.is_valid(cfg.certificate_tolerance));
        if alpha < 1.0 && certified {
            // α (∇U₁·f_U₁) + |∇U₂ - ∇U₁|² ≤ ∇U₂·f_U₂ ≤ 0 with U₁ the shrunk previous potential
            let u1 = first.u.scale(1.0 - cfg.interior_shrink);
            let u2 = normalize(&next.u, &vec![0.0; n]);
            let (d1, d2) = (defect(&u1, &f), defect(&u2, &f));
            let (g1, g2) = (u1.gradient(), u2.gradient());
            let improvement = Slack::new(&next.certificates, "improvement", cfg.certificate_tolerance);
            let schur = Slack::new(&next.certificates, "M_U", cfg.certificate_tolerance);
            for x in sample_points(n, 1000, seed ^ 2) {
                let a = g1.evaluate(&x).unwrap();
                let b = g2.evaluate(&x).unwrap();
                let step: f64 = a.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum();
                let lhs = -alpha * d1.evaluate(&x).unwrap() + step;
                let mid = -d2.evaluate(&x).unwrap();
                prop_assert!(lhs <= mid + improvement.at(&x), "{lhs} > {mid} at {x:?}");
                let tol = schur.at(&schur_point(&x, &b));
                prop_assert!(mid <= tol, "∇U₂·f_U₂ = {mid} at {x:?} (slack {tol:e})");
            }
        }
    }
}
