use proptest::prelude::*;

use qpot::basis::BasisSpec;
use qpot::poly::{parse_polynomial, Monomial, Polynomial, VectorField, DISPLAY_THRESHOLD};
use qpot::report::{format_g, polynomial_from_terms, terms_of};

fn monomial(n: usize, max_degree: u32) -> impl Strategy<Value = Monomial> {
    prop::collection::vec(0..=max_degree, n)
        .prop_filter("total degree", move |e| e.iter().sum::<u32>() <= max_degree)
        .prop_map(Monomial::new)
}

fn coefficient() -> impl Strategy<Value = f64> {
    (-3.0f64..3.0).prop_filter("visible", |c| c.abs() >= 1e-3)
}

fn polynomial(n: usize, max_degree: u32) -> impl Strategy<Value = Polynomial> {
    prop::collection::vec((monomial(n, max_degree), coefficient()), 1..8)
        .prop_map(move |terms| Polynomial::from_terms(n, terms).unwrap())
}

fn with_point(max_degree: u32) -> impl Strategy<Value = (Polynomial, Vec<f64>)> {
    (1usize..=4).prop_flat_map(move |n| (polynomial(n, max_degree), prop::collection::vec(-2.0f64..2.0, n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn gradient_matches_central_differences((p, x) in with_point(6)) {
        let g = p.gradient().evaluate(&x).unwrap();
        let h = 1e-5;
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let fd = (p.evaluate(&xp).unwrap() - p.evaluate(&xm).unwrap()) / (2.0 * h);
            // h² error of a degree-6 polynomial on [-2, 2]
            let scale = g[i].abs().max(1.0);
            prop_assert!((g[i] - fd).abs() < 1e-6 * scale, "d/dx{}: {} vs {}", i + 1, g[i], fd);
        }
    }

    #[test]
    fn product_evaluates_to_product(
        (a, b, x) in (1usize..=4).prop_flat_map(|n| (polynomial(n, 3), polynomial(n, 3), prop::collection::vec(-2.0f64..2.0, n)))
    ) {
        let ab = (&a * &b).evaluate(&x).unwrap();
        let expected = a.evaluate(&x).unwrap() * b.evaluate(&x).unwrap();
        // rounding relative to the size of the summands, not of their sum
        let mag = a.terms().map(|(m, c)| (c * m.evaluate(&x)).abs()).sum::<f64>()
            * b.terms().map(|(m, c)| (c * m.evaluate(&x)).abs()).sum::<f64>();
        prop_assert!((ab - expected).abs() <= 1e-12 * mag.max(f64::MIN_POSITIVE), "{ab} vs {expected}");
    }

    #[test]
    fn text_form_roundtrips((p, _) in with_point(6)) {
        prop_assert!(p.terms().all(|(_, c)| c.abs() >= DISPLAY_THRESHOLD));
        let back = parse_polynomial(&p.to_string(), p.nvars()).unwrap();
        prop_assert_eq!(back, p);
    }

    #[test]
    fn term_list_roundtrips_any_coefficient(
        terms in prop::collection::vec((monomial(2, 4), any::<f64>().prop_filter("finite", |c| c.is_finite())), 1..6)
    ) {
        let p = Polynomial::from_terms(2, terms).unwrap();
        let json = serde_json::to_string(&terms_of(&p)).unwrap();
        let back = polynomial_from_terms(2, &serde_json::from_str::<Vec<_>>(&json).unwrap()).unwrap();
        prop_assert_eq!(back, p);
    }

    #[test]
    fn format_g_keeps_ten_digits(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        let s = format_g(v);
        let back: f64 = s.parse().unwrap();
        prop_assert!((back - v).abs() <= 5e-10 * v.abs(), "{v} -> {s}");
    }

    #[test]
    fn basis_invariants(
        f in (1usize..=3).prop_flat_map(|n| prop::collection::vec(polynomial(n, 3), n))
    ) {
        let field = VectorField::new(f).unwrap();
        if let Ok(b) = BasisSpec::for_field(&field) {
            prop_assert!(b.bound_basis.iter().all(Monomial::is_even));
            prop_assert!(b.bound_basis.iter().all(|m| b.potential_basis.contains(m)));
            let top = |v: &[Monomial]| v.iter().map(Monomial::degree).max().unwrap_or(0);
            prop_assert_eq!(top(&b.bound_basis), top(&b.potential_basis));
        }
    }
}
