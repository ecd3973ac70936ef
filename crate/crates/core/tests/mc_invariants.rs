use fisher_curvature::correction::analyze;
use fisher_curvature::mc_harness::{fit_expansion, simulate_covariance, SampleSizeResult, SimulationPlan, SimulationResult};
use fisher_curvature::model::{build_model, ModelSpec};
use fisher_curvature::{ExpectationEngine, FdPolicy};

#[test]
fn gaussian_mean_estimator_is_unbiased() {
    let model = build_model::<f64>(&ModelSpec::new("gaussian-mean", Some(1))).unwrap();
    let plan = SimulationPlan::new(vec![0.3], vec![25, 50, 100, 200, 400], 4000, 17);
    let result = simulate_covariance(&*model, &plan).unwrap();
    assert!(result.valid());
    for r in &result.per_n {
        assert!(r.bias[0].abs() <= 3.0 * r.bias_se[0], "n = {}: {} vs {}", r.n, r.bias[0], r.bias_se[0]);
        assert_eq!(r.dropped, 0);
    }
}

#[test]
fn fit_recovers_noiseless_prediction() {
    let model = build_model::<f64>(&ModelSpec::new("curved-gaussian-efron", None)).unwrap();
    let a = analyze(&*model, &[0.3], &ExpectationEngine::gauss_hermite(), FdPolicy::default()).unwrap();
    let ns = vec![25usize, 50, 100, 200, 400];
    let per_n = ns
        .iter()
        .map(|&n| {
            let cov = a.correction.predict_cov(n).unwrap();
            SampleSizeResult {
                n,
                kept: 1000,
                dropped: 0,
                domain_exits: 0,
                cov_se: cov.scale(0.01),
                cov,
                bias: vec![0.0],
                bias_se: vec![1.0],
                valid: true,
            }
        })
        .collect();
    let result = SimulationResult {
        model: "curved-gaussian-efron".into(),
        plan: SimulationPlan::new(vec![0.3], ns, 1000, 0),
        per_n,
    };
    let fit = fit_expansion(&result, &a.correction).unwrap();
    let e = fit.entry(0, 0).unwrap();
    assert!((e.fit.c1 - e.c1_pred).abs() <= 1e-10);
    assert!((e.fit.c2 - e.c2_pred).abs() <= 1e-10);
}

#[test]
fn simulation_result_is_reproducible_and_serializable() {
    let model = build_model::<f64>(&ModelSpec::new("poisson", None)).unwrap();
    let plan = SimulationPlan::new(vec![2.0], vec![10, 20, 40], 1000, 3);
    let a = simulate_covariance(&*model, &plan).unwrap();
    let b = simulate_covariance(&*model, &plan).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let other = simulate_covariance(&*model, &SimulationPlan { seed: 4, ..plan }).unwrap();
    assert_ne!(a.per_n[0].cov, other.per_n[0].cov);
}
