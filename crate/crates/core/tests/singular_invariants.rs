use fisher_curvature::expectation::quadrature::{adaptive_integrate_scalar, AdaptiveTol};
use fisher_curvature::model::{build_model, ModelSpec};
use fisher_curvature::singular::{
    a_constant, log_grid, mse_rate, null_directions, rlct, singular_report, spec_library, z_n, z_n_asymptotic,
    NormalCrossingSpec, Polynomial, TangentCone,
};
use fisher_curvature::ExpectationEngine;
use num_rational::Ratio;
use proptest::prelude::*;

#[test]
fn library_slopes_match_rates() {
    let ns = log_grid(2, 6, 4);
    for spec in spec_library() {
        let r = singular_report(&spec, &ns, None).unwrap();
        assert!((r.z_fit.slope + r.lambda).abs() <= 0.02, "{:?}: {} vs λ {}", spec.terms, r.z_fit.slope, r.lambda);
        let rate = r.mse_rate;
        let tol = if spec.is_regular() { 0.02 } else { 0.05 };
        assert!((r.mse_fit.slope + rate).abs() <= tol, "{:?}: {} vs {}", spec.terms, r.mse_fit.slope, rate);
    }
}

#[test]
fn boundary_effects_are_negligible_on_the_grid() {
    for spec in spec_library() {
        for n in log_grid(2, 6, 1) {
            let (z, _) = z_n(&spec, n).unwrap();
            let defect = (z / z_n_asymptotic(&spec, n).unwrap() - 1.0).abs();
            assert!(defect < 1e-12, "{:?} n = {n}: {defect:e}", spec.terms);
        }
    }
}

#[test]
fn library_covers_required_orders() {
    let lib = spec_library();
    assert_eq!(lib.len(), 10);
    for k in 1..=3 {
        assert!(lib.iter().any(|s| s.terms.iter().any(|t| t.k == k)));
    }
    for h in 0..=2 {
        assert!(lib.iter().any(|s| s.terms.iter().any(|t| t.h == h)));
    }
}

#[test]
fn spec_parses_with_defaults() {
    let spec: NormalCrossingSpec = serde_json::from_str(r#"{"terms":[{"c":1,"k":2,"h":0},{"c":1,"k":1,"h":0}]}"#).unwrap();
    assert_eq!(spec.epsilon, 1.0);
    assert_eq!(spec.psi0, 1.0);
    assert_eq!(rlct(&spec).unwrap(), Ratio::new(3, 4));
    assert_eq!(mse_rate(&spec).unwrap(), Ratio::new(1, 2));
}

#[test]
fn degenerate_sum_null_direction() {
    let model = build_model::<f64>(&ModelSpec::new("degenerate-sum-gaussian", None)).unwrap();
    let nd = null_directions(&*model, &[0.3, -0.1], &ExpectationEngine::gauss_hermite()).unwrap();
    assert_eq!(nd.basis.len(), 1);
    let v = &nd.basis[0];
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let sign = v[0].signum();
    assert!((sign * v[0] - r).abs() < 1e-12 && (sign * v[1] + r).abs() < 1e-12, "{v:?}");
    assert!(nd.verified(1e-10));
    let regular = build_model::<f64>(&ModelSpec::new("gaussian-mean", Some(2))).unwrap();
    let nd = null_directions(&*regular, &[0.0, 1.0], &ExpectationEngine::gauss_hermite()).unwrap();
    assert!(nd.basis.is_empty());
}

fn axis_polynomial(ks: &[u32], cs: &[f64]) -> Polynomial<f64> {
    let d = ks.len();
    Polynomial::from_terms(
        d,
        ks.iter().zip(cs).enumerate().map(|(j, (&k, &c))| {
            let mut e = vec![0; d];
            e[j] = 2 * k;
            (e, c)
        }),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn regular_rlct_is_half_dimension(d in 1usize..8, c in 0.1f64..5.0) {
        let spec = NormalCrossingSpec::from_triples(&vec![(c, 1, 0); d]);
        prop_assert_eq!(rlct(&spec).unwrap(), Ratio::new(d as u64, 2));
    }

    #[test]
    fn a_constant_matches_quadrature(c in 0.2f64..4.0, k in 1u32..4, h in 0u32..3) {
        let scale = c.powf(-1.0 / (2.0 * k as f64));
        let breaks: Vec<f64> = (0..6).map(|p| scale * 2f64.powi(p - 2)).collect();
        let tol = AdaptiveTol { abs: 0.0, rel: 1e-13, max_intervals: 4000 };
        let (half, _) = adaptive_integrate_scalar(
            |u: f64| (-c * u.powi(2 * k as i32)).exp() * u.powi(h as i32),
            0.0,
            40.0 * scale,
            &breaks,
            tol,
        )
        .unwrap();
        prop_assert!((2.0 * half / a_constant(c, k, h) - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn cone_metric_symmetry_and_bilinearity(
        k in 1u32..4,
        c in prop::collection::vec(0.2f64..3.0, 2),
        v in prop::collection::vec(-1.0f64..1.0, 2),
        w1 in prop::collection::vec(-1.0f64..1.0, 2),
        w2 in prop::collection::vec(-1.0f64..1.0, 2),
    ) {
        let poly = axis_polynomial(&[k, k], &c);
        let cone = TangentCone::new(&poly, &[0.0, 0.0]).unwrap();
        prop_assert_eq!(cone.order, 2 * k);
        let g = |a: &[f64], b: &[f64]| cone.metric(a, b);
        prop_assert!((g(&v, &w1) - g(&w1, &v)).abs() <= 1e-12);
        let w12: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| a + b).collect();
        let residual = g(&v, &w12) - g(&v, &w1) - g(&v, &w2);
        if k == 1 {
            prop_assert!(residual.abs() <= 1e-12);
        }
        let doubled: Vec<f64> = v.iter().map(|x| 2.0 * x).collect();
        let ratio = cone.phi_at(&doubled) - 2f64.powi(2 * k as i32) * cone.phi_at(&v);
        prop_assert!(ratio.abs() <= 1e-10);
    }
}

#[test]
fn cone_bilinearity_fails_for_higher_order() {
    let poly = axis_polynomial(&[2, 3], &[1.0, 0.5]);
    let cone = TangentCone::new(&poly, &[0.0, 0.0]).unwrap();
    assert_eq!(cone.order, 4);
    let (v, w1, w2) = ([0.3, -0.7], [0.5, 0.2], [-0.4, 0.9]);
    let w12 = [w1[0] + w2[0], w1[1] + w2[1]];
    let residual = cone.metric(&v, &w12) - cone.metric(&v, &w1) - cone.metric(&v, &w2);
    assert!(residual.abs() > 1e-3);
}
