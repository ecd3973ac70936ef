mod common;

use common::{builtins, grid, regular_builtins};
use fisher_curvature::expectation::{bartlett_residuals, moment_table, third_moment_identity_residual};
use fisher_curvature::model::{build_model, ModelSpec, SampleSpace};
use fisher_curvature::{ExpectationEngine, MomentTable64, Tensor64};

fn entries(t: &MomentTable64) -> Vec<(&'static str, &Tensor64)> {
    vec![
        ("g", &t.g),
        ("t", &t.t),
        ("ge", &t.ge),
        ("kappa", &t.kappa),
        ("q", &t.q),
        ("m", &t.m),
        ("f", &t.f),
    ]
}

#[test]
fn doubling_hermite_order_stays_within_reported_error() {
    for (b, spec, model) in builtins() {
        if !matches!(ExpectationEngine::default_for(&*model), ExpectationEngine::GaussHermite { .. }) {
            continue;
        }
        let mut thetas = grid(b, &model);
        if thetas.is_empty() {
            thetas.push(vec![0.3, -0.4]);
        }
        for theta in thetas {
            let base = moment_table(&*model, &theta, &ExpectationEngine::GaussHermite { order: 16 }).unwrap();
            let fine = moment_table(&*model, &theta, &ExpectationEngine::GaussHermite { order: 32 }).unwrap();
            for ((name, a), (_, c)) in entries(&base).into_iter().zip(entries(&fine)) {
                let diff = a.max_abs_diff(c);
                assert!(diff < base.err, "{} {theta:?} {name}: {diff:e} vs err {:e}", spec.name, base.err);
            }
        }
    }
}

#[test]
fn monte_carlo_converges_at_root_n() {
    let model = build_model::<f64>(&ModelSpec::new("curved-gaussian-efron", None)).unwrap();
    let theta = [0.4];
    let exact = moment_table(&*model, &theta, &ExpectationEngine::gauss_hermite()).unwrap();
    let mut prev_se = f64::INFINITY;
    for samples in [1_000usize, 10_000, 100_000] {
        let mc = moment_table(&*model, &theta, &ExpectationEngine::MonteCarlo { samples, seed: 5 }).unwrap();
        let err = mc.g.max_abs_diff(&exact.g);
        // err field is the largest standard error over all entries
        assert!(err <= 5.0 * mc.err, "samples {samples}: {err:e} vs se {:e}", mc.err);
        if prev_se.is_finite() {
            let ratio = prev_se / mc.err;
            assert!((ratio / 10f64.sqrt() - 1.0).abs() < 0.35, "se ratio {ratio}");
        }
        prev_se = mc.err;
    }
}

/// Richardson-extrapolated central difference of `g` along coordinate `k`.
fn fd_metric(model: &common::Model, theta: &[f64], engine: &ExpectationEngine, k: usize) -> Tensor64 {
    let g_at = |h: f64| {
        let mut tp = theta.to_vec();
        let mut tm = theta.to_vec();
        tp[k] += h;
        tm[k] -= h;
        let gp = moment_table(&**model, &tp, engine).unwrap().g;
        let gm = moment_table(&**model, &tm, engine).unwrap().g;
        gp.sub(&gm).scale(0.5 / h)
    };
    let h = 1e-4 * theta[k].abs().max(0.1);
    let coarse = g_at(h);
    let fine = g_at(h / 2.0);
    fine.scale(4.0 / 3.0).sub(&coarse.scale(1.0 / 3.0))
}

#[test]
fn metric_derivative_identity_matches_finite_differences() {
    for (b, spec, model) in regular_builtins() {
        let engine = ExpectationEngine::default_for(&*model);
        for theta in grid(b, &model) {
            let table = moment_table(&*model, &theta, &engine).unwrap();
            let dg = table.metric_derivative();
            let d = table.dim();
            for k in 0..d {
                let fd = fd_metric(&model, &theta, &engine, k);
                for i in 0..d {
                    for j in 0..d {
                        let diff = (dg.at3(k, i, j) - fd.at2(i, j)).abs();
                        assert!(diff <= 1e-5, "{} {theta:?} ∂_{k}g_{i}{j}: {diff:e}", spec.name);
                    }
                }
            }
        }
    }
}

#[test]
fn bartlett_and_third_moment_identities() {
    for (b, spec, model) in builtins() {
        let engine = ExpectationEngine::default_for(&*model);
        let mut thetas = grid(b, &model);
        if thetas.is_empty() {
            thetas = vec![vec![0.0, 0.0], vec![0.3, -0.4]];
        }
        for theta in thetas {
            let table = moment_table(&*model, &theta, &engine).unwrap();
            let bart = bartlett_residuals(&table, &*model, &theta, &engine).unwrap().max_abs();
            let third = third_moment_identity_residual(&table).max_abs();
            assert!(bart <= 1e-8, "{} {theta:?}: Bartlett {bart:e}", spec.name);
            assert!(third <= 1e-8, "{} {theta:?}: third moment {third:e}", spec.name);
        }
    }
}

#[test]
fn discrete_engine_rejects_continuous_models() {
    let model = build_model::<f64>(&ModelSpec::new("gaussian-mean", Some(1))).unwrap();
    assert!(moment_table(&*model, &[0.0], &ExpectationEngine::discrete()).is_err());
    let _: SampleSpace = model.space();
}

#[test]
fn json_layout_is_flat_row_major() {
    let model = build_model::<f64>(&ModelSpec::new("graph-surface-gaussian", None)).unwrap();
    let table = moment_table(&*model, &[0.5, -0.3], &ExpectationEngine::gauss_hermite()).unwrap();
    let json = serde_json::to_value(&table).unwrap();
    assert_eq!(json["g"]["dim"], 2);
    assert_eq!(json["t"]["rank"], 3);
    assert_eq!(json["t"]["data"].as_array().unwrap().len(), 8);
    assert_eq!(json["ge"]["data"][1].as_f64().unwrap(), table.ge.at3(0, 0, 1));
    assert!(json["err"].is_number());
    let back: MomentTable64 = serde_json::from_value(json).unwrap();
    assert_eq!(back, table);
}
