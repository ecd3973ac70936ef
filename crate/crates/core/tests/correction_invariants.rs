mod common;

use common::{builtins, grid, regular_builtins, rotation_change, tensoriality_error};
use fisher_curvature::correction::{analyze, build_normal_chart, pushforward_moments, tangency_residuals};
use fisher_curvature::expectation::moment_table;
use fisher_curvature::geometry::geometry_snapshot;
use fisher_curvature::model::{build_model, Builtin, ModelSpec, QuadraticReparam};
use fisher_curvature::{ExpectationEngine, FdPolicy, Tensor64};

fn model(name: &str, dim: Option<usize>) -> common::Model {
    build_model::<f64>(&ModelSpec::new(name, dim)).unwrap()
}

#[test]
fn full_and_reduced_forms_agree() {
    for (b, spec, model) in regular_builtins() {
        let engine = ExpectationEngine::default_for(&*model);
        for theta in grid(b, &model) {
            let a = analyze(&*model, &theta, &engine, FdPolicy::default()).unwrap();
            let c = &a.correction.consistency;
            assert!(c.full_vs_reduced <= 1e-8, "{} {theta:?}: {:e}", spec.name, c.full_vs_reduced);
            assert!(c.tangency.worst() <= 1e-6, "{} {theta:?}: {:?}", spec.name, c.tangency);
        }
    }
}

#[test]
fn p_transforms_as_covariant_two_tensor() {
    let cases: [(&str, Option<usize>, Vec<f64>); 5] = [
        ("curved-gaussian-efron", None, vec![0.3]),
        ("graph-surface-gaussian", None, vec![0.5, -0.3]),
        ("cauchy-location", None, vec![0.7]),
        ("poisson", None, vec![2.0]),
        ("gaussian-mean", Some(3), vec![0.1, -0.2, 0.4]),
    ];
    for (name, dim, theta) in cases {
        for seed in 0..20u64 {
            let err = tensoriality_error(|| model(name, dim), &theta, seed);
            assert!(err <= 1e-4, "{name} seed {seed}: relative {err:e}");
        }
    }
}

#[test]
fn whitening_rotation_leaves_p_unchanged() {
    for (b, spec, model) in regular_builtins() {
        for (t, theta) in grid(b, &model).into_iter().enumerate() {
            let change = rotation_change(&model, &theta, t as u64);
            assert!(change <= 1e-10, "{} {theta:?}: {change:e}", spec.name);
        }
    }
}

#[test]
fn normal_chart_is_flat_at_base_point() {
    for (b, spec, base) in regular_builtins() {
        let engine = ExpectationEngine::default_for(&*base);
        let theta0 = grid(b, &base)[1].clone();
        let d = theta0.len();
        let snap = geometry_snapshot(&*base, &theta0, &engine, FdPolicy::default()).unwrap();
        let chart = build_normal_chart(&snap).unwrap();
        let reparam = QuadraticReparam::new(base, theta0.clone(), vec![0.0; d], chart.a.clone(), chart.hq.clone()).unwrap();
        let u0 = vec![0.0; d];
        let g0 = moment_table(&reparam, &u0, &engine).unwrap().g;
        assert!(g0.max_abs_diff(&Tensor64::identity(d)) <= 1e-10, "{}", spec.name);
        // Γ vanishes iff every first derivative of g does
        let h = 1e-4;
        for k in 0..d {
            let mut up = u0.clone();
            let mut dn = u0.clone();
            up[k] = h;
            dn[k] = -h;
            let gp = moment_table(&reparam, &up, &engine).unwrap().g;
            let gm = moment_table(&reparam, &dn, &engine).unwrap().g;
            let slope = gp.sub(&gm).scale(0.5 / h).max_abs();
            assert!(slope <= 1e-6, "{} ∂_{k}g = {slope:e}", spec.name);
        }
        let table = moment_table(&*reparam.base(), &theta0, &engine).unwrap();
        let res = tangency_residuals(&pushforward_moments(&table, &chart));
        assert!(res.worst() <= 1e-6, "{}: {res:?}", spec.name);
    }
}

#[test]
fn gaussian_mean_p_vanishes() {
    for dim in [1usize, 3] {
        let m = model("gaussian-mean", Some(dim));
        for theta in Builtin::GaussianMean.theta_grid(dim) {
            let a = analyze(&*m, &theta, &ExpectationEngine::gauss_hermite(), FdPolicy::default()).unwrap();
            let c = &a.correction;
            assert!(c.p_user.max_abs() <= 1e-6);
            assert!(c.d_user.add(&c.ssharp_user).max_abs() <= 1e-6);
        }
    }
}

#[test]
fn poisson_p_in_closed_form() {
    // At θ = 1 the chart is u = 2(√θ − 1) to second order, where
    // s'_11 = −(x + 1)/2 and s'_111 = x/2 give Var(s'_11) − ¼κ'² = 3/16;
    // the θ-scaling of the moments turns this into P_user = 3/(16θ²).
    let m = model("poisson", None);
    for theta in Builtin::Poisson.theta_grid(1) {
        let a = analyze(&*m, &theta, &ExpectationEngine::discrete(), FdPolicy::default()).unwrap();
        let expect = 3.0 / (16.0 * theta[0] * theta[0]);
        assert!((a.correction.p_user.at2(0, 0) / expect - 1.0).abs() <= 1e-8, "{theta:?}");
    }
}

#[test]
fn efron_decomposition_at_origin() {
    let m = model("curved-gaussian-efron", None);
    let a = analyze(&*m, &[0.0], &ExpectationEngine::gauss_hermite(), FdPolicy::default()).unwrap();
    let c = &a.correction;
    assert!((c.p_user.at2(0, 0) - 4.0).abs() <= 1e-10);
    assert_eq!(c.rsharp_user.at2(0, 0), 0.0);
    assert!((c.ssharp_user.at2(0, 0) - 19.0 / 16.0).abs() <= 1e-10);
    assert!((c.d_user.at2(0, 0) - 45.0 / 16.0).abs() <= 1e-10);
    let cov = c.predict_cov(25).unwrap();
    assert!((cov.at2(0, 0) - (1.0 / 25.0 + 4.0 / 625.0)).abs() <= 1e-12);
}

#[test]
fn singular_model_is_refused() {
    for (b, _, m) in builtins() {
        if b != Builtin::DegenerateSumGaussian {
            continue;
        }
        assert!(analyze(&*m, &[0.2, 0.1], &ExpectationEngine::gauss_hermite(), FdPolicy::default()).is_err());
    }
}
