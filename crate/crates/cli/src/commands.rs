use fisher_curvature::correction::analyze;
use fisher_curvature::expectation::{bartlett_residuals, moment_table, third_moment_identity_residual};
use fisher_curvature::geometry::geometry_snapshot_from_table;
use fisher_curvature::immersion::immersion_report_with;
use fisher_curvature::linalg::{congruence, sym_eigenvalues};
use fisher_curvature::mc_harness::{fit_expansion, simulate_covariance, SimulationPlan};
use fisher_curvature::model::{build_model, check_derivatives, Builtin, ModelSpec, DERIVATIVE_FAILURE_TOL};
use fisher_curvature::singular::{log_grid, null_directions, singular_report, spec_library};
use fisher_curvature::{Error, ExpectationEngine, FdPolicy, ParametricModel, Tensor64};
use serde::Serialize;
use serde_json::json;

use crate::config::{CommandKind, RunConfig};
use crate::output::{json_artifact, num, text_table, Artifact, Csv};

type Model = Box<dyn ParametricModel<f64>>;

/// Artifacts plus whether every assertion the command makes held.
pub struct RunOutput {
    pub artifacts: Vec<Artifact>,
    pub passed: bool,
}

pub fn run(config: &RunConfig) -> Result<RunOutput, Error> {
    match config.command {
        CommandKind::Tensors => tensors(config),
        CommandKind::Decompose => decompose(config),
        CommandKind::Simulate => simulate(config),
        CommandKind::Verify => verify(config),
        CommandKind::Singular => singular(config),
    }
}

fn model_and_engine(config: &RunConfig) -> Result<(Model, ExpectationEngine, Vec<f64>), Error> {
    let spec = config.model.as_ref().expect("validated");
    let model = build_model::<f64>(spec)?;
    let engine = config.engine().unwrap_or_else(|| ExpectationEngine::default_for(&*model));
    let theta = config.theta.clone().expect("validated");
    Ok((model, engine, theta))
}

fn tensor_rows(csv: &mut Csv, object: &str, name: &str, t: &Tensor64) {
    let d = t.dim();
    let mut idx = vec![0usize; t.rank()];
    for (flat, &v) in t.data().iter().enumerate() {
        let mut rem = flat;
        for slot in idx.iter_mut().rev() {
            *slot = rem % d;
            rem /= d;
        }
        let index = idx.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
        csv.row(&[object.into(), name.into(), index, num(v)]);
    }
}

fn tensors(config: &RunConfig) -> Result<RunOutput, Error> {
    let (model, engine, theta) = model_and_engine(config)?;
    engine.check_compatible(&*model)?;
    let table = moment_table(&*model, &theta, &engine)?;
    let geometry = geometry_snapshot_from_table(&*model, &table, &engine, FdPolicy::default())?;
    let immersion = immersion_report_with(&table, &geometry.metric()).with_gauss(&geometry.riemann);
    let mut csv = Csv::new(&["object", "tensor", "index", "value"]);
    for (name, t) in [
        ("g", &geometry.g),
        ("g_inv", &geometry.g_inv),
        ("christoffel", &geometry.christoffel),
        ("christoffel_lowered", &geometry.christoffel_lowered),
        ("riemann", &geometry.riemann),
        ("rsharp", &geometry.rsharp),
    ] {
        tensor_rows(&mut csv, "geometry", name, t);
    }
    for (name, t) in [("gram_ii", &immersion.gram_ii), ("ssharp", &immersion.ssharp)] {
        tensor_rows(&mut csv, "immersion", name, t);
    }
    Ok(RunOutput {
        artifacts: vec![
            json_artifact("tensors.json", config, json!({ "geometry": geometry, "immersion": immersion })),
            csv.into_artifact("tensors.csv"),
        ],
        passed: true,
    })
}

#[derive(Serialize)]
struct Spectrum {
    p: Vec<f64>,
    half_rsharp: Vec<f64>,
    ssharp: Vec<f64>,
    d: Vec<f64>,
}

fn decompose(config: &RunConfig) -> Result<RunOutput, Error> {
    let (model, engine, theta) = model_and_engine(config)?;
    let a = analyze(&*model, &theta, &engine, FdPolicy::default())?;
    let c = &a.correction;
    let half_r = c.rsharp_user.scale(0.5);
    // eigenvalues relative to the Fisher metric, i.e. in the normal chart
    let spec = |t: &Tensor64| sym_eigenvalues(&congruence(t, &c.chart.a));
    let spectrum = Spectrum {
        p: spec(&c.p_user),
        half_rsharp: spec(&half_r),
        ssharp: spec(&c.ssharp_user),
        d: spec(&c.d_user),
    };
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.10}")).collect::<Vec<_>>().join(" ");
    let rows = vec![
        vec!["P".to_string(), fmt(&spectrum.p)],
        vec!["R#/2".to_string(), fmt(&spectrum.half_rsharp)],
        vec!["S#".to_string(), fmt(&spectrum.ssharp)],
        vec!["D (P - R#/2 - S#)".to_string(), fmt(&spectrum.d)],
    ];
    let table = format!(
        "{} at theta = {:?}\neigenvalues relative to the Fisher metric\n{}",
        model.name(),
        theta,
        text_table(&["term", "eigenvalues"], &rows)
    );
    let mut csv = Csv::new(&["object", "tensor", "index", "value"]);
    for (name, t) in [
        ("p", &c.p_user),
        ("half_rsharp", &half_r),
        ("ssharp", &c.ssharp_user),
        ("d", &c.d_user),
        ("fisher", &c.fisher),
    ] {
        tensor_rows(&mut csv, "correction", name, t);
    }
    Ok(RunOutput {
        artifacts: vec![
            json_artifact(
                "correction.json",
                config,
                json!({ "report": c, "eigenvalues": spectrum, "second_order_coefficient": c.second_order_coefficient() }),
            ),
            csv.into_artifact("correction.csv"),
            Artifact {
                name: "decompose.txt".into(),
                body: table,
            },
        ],
        passed: true,
    })
}

fn simulate(config: &RunConfig) -> Result<RunOutput, Error> {
    let (model, engine, theta) = model_and_engine(config)?;
    let prediction = analyze(&*model, &theta, &engine, FdPolicy::default())?;
    let ns: Vec<usize> = config.n_grid.as_ref().expect("validated").iter().map(|&n| n as usize).collect();
    let plan = SimulationPlan::new(
        theta,
        ns,
        config.replicates.expect("validated"),
        config.seed.expect("validated"),
    );
    let result = simulate_covariance(&*model, &plan)?;
    let fit = fit_expansion(&result, &prediction.correction)?;
    let passed = result.valid() && fit.passes(config.z_threshold);
    let mut csv = Csv::new(&["n", "i", "j", "value", "se", "dropped"]);
    let d = model.dim();
    for r in &result.per_n {
        for i in 0..d {
            for j in i..d {
                csv.row(&[
                    r.n.to_string(),
                    i.to_string(),
                    j.to_string(),
                    num(r.cov.at2(i, j)),
                    num(r.cov_se.at2(i, j)),
                    r.dropped.to_string(),
                ]);
            }
        }
    }
    Ok(RunOutput {
        artifacts: vec![
            json_artifact(
                "fit.json",
                config,
                json!({
                    "fit": fit,
                    "per_n": result.per_n,
                    "valid": result.valid(),
                    "z_threshold": config.z_threshold,
                    "passed": passed,
                }),
            ),
            csv.into_artifact("covariance.csv"),
        ],
        passed,
    })
}

#[derive(Serialize)]
struct Check {
    subject: String,
    theta: Vec<f64>,
    check: &'static str,
    value: f64,
    /// `"<="` or `">"`
    relation: &'static str,
    limit: f64,
    pass: bool,
}

struct Suite {
    checks: Vec<Check>,
}

impl Suite {
    fn at_most(&mut self, subject: &str, theta: &[f64], check: &'static str, value: f64, limit: f64) {
        self.checks.push(Check {
            subject: subject.into(),
            theta: theta.to_vec(),
            check,
            value,
            relation: "<=",
            limit,
            pass: value <= limit,
        });
    }

    fn above(&mut self, subject: &str, theta: &[f64], check: &'static str, value: f64, limit: f64) {
        self.checks.push(Check {
            subject: subject.into(),
            theta: theta.to_vec(),
            check,
            value,
            relation: ">",
            limit,
            pass: value > limit,
        });
    }

    fn failure(&mut self, subject: &str, theta: &[f64], check: &'static str) {
        self.checks.push(Check {
            subject: subject.into(),
            theta: theta.to_vec(),
            check,
            value: f64::NAN,
            relation: "<=",
            limit: 0.0,
            pass: false,
        });
    }
}

fn verify_point(suite: &mut Suite, b: Builtin, name: &str, model: &Model, theta: &[f64], seed: u64) {
    let engine = ExpectationEngine::default_for(&**model);
    match check_derivatives(&**model, theta, 8, seed) {
        Ok(c) => suite.at_most(name, theta, "derivatives", c.max_error.iter().cloned().fold(0.0, f64::max), DERIVATIVE_FAILURE_TOL),
        Err(_) => suite.failure(name, theta, "derivatives"),
    }
    let table = match moment_table(&**model, theta, &engine) {
        Ok(t) => t,
        Err(_) => return suite.failure(name, theta, "moments"),
    };
    match bartlett_residuals(&table, &**model, theta, &engine) {
        Ok(r) => suite.at_most(name, theta, "bartlett", r.max_abs(), 1e-8),
        Err(_) => suite.failure(name, theta, "bartlett"),
    }
    suite.at_most(name, theta, "third_moment_identity", third_moment_identity_residual(&table).max_abs(), 1e-8);
    if b == Builtin::DegenerateSumGaussian {
        match null_directions(&**model, theta, &engine) {
            Ok(nd) => {
                suite.at_most(name, theta, "null_space_dimension_minus_one", (nd.basis.len() as f64 - 1.0).abs(), 0.0);
                suite.at_most(name, theta, "null_direction_residual", nd.residuals.iter().cloned().fold(0.0, f64::max), 1e-10);
            }
            Err(_) => suite.failure(name, theta, "null_directions"),
        }
        return;
    }
    let a = match analyze(&**model, theta, &engine, FdPolicy::default()) {
        Ok(a) => a,
        Err(_) => return suite.failure(name, theta, "analysis"),
    };
    let alpha = a.moments.ge.add(&a.moments.t.scale(0.5));
    suite.at_most(name, theta, "connection_identity", a.geometry.christoffel_lowered.max_abs_diff(&alpha), 1e-6);
    let dg = a.moments.metric_derivative();
    let d = a.moments.dim();
    let kappa = Tensor64::from_fn(d, 3, |ix| a.moments.kappa.at3(ix[0], ix[1], ix[2]) + a.moments.ge.at3(ix[0], ix[1], ix[2]) + dg.at3(ix[2], ix[0], ix[1]));
    suite.at_most(name, theta, "kappa_identity", kappa.max_abs(), 1e-6);
    suite.at_most(name, theta, "curvature_symmetries", a.geometry.checks.worst(), 1e-8);
    suite.at_most(name, theta, "gauss_equation", a.immersion.gauss_residual_max().unwrap_or(f64::NAN), 1e-5);
    suite.at_most(name, theta, "gram_ii_negative_part", (-a.immersion.gram_ii_min_eig).max(0.0), 1e-9);
    suite.at_most(name, theta, "ssharp_negative_part", (-sym_eigenvalues(&a.immersion.ssharp)[0]).max(0.0), 1e-9);
    suite.at_most(name, theta, "full_vs_reduced", a.correction.consistency.full_vs_reduced, 1e-8);
    suite.at_most(name, theta, "chart_tangency", a.correction.consistency.tangency.worst(), 1e-6);
    if b.is_exponential_family() {
        let c = &a.correction;
        suite.at_most(name, theta, "exponential_family_p", c.p_user.max_abs(), 1e-6);
        suite.at_most(name, theta, "exponential_family_d_plus_s", c.d_user.add(&c.ssharp_user).max_abs(), 1e-6);
    }
    if b == Builtin::CurvedGaussianEfron {
        suite.above(name, theta, "statistical_curvature", a.immersion.kappa_sq, 0.0);
    }
    if b == Builtin::GraphSurfaceGaussian && theta.iter().all(|&t| t == 0.0) {
        suite.at_most(name, theta, "r1212_at_origin_minus_one", (a.geometry.riemann.at4(0, 1, 0, 1) - 1.0).abs(), 1e-5);
    }
}

fn verify(config: &RunConfig) -> Result<RunOutput, Error> {
    let seed = config.seed.expect("defaulted");
    let mut suite = Suite { checks: Vec::new() };
    for b in Builtin::ALL {
        let dims: Vec<Option<usize>> = if b == Builtin::GaussianMean { vec![Some(1), Some(3)] } else { vec![None] };
        for dim in dims {
            let spec = ModelSpec::new(b.registry_name(), dim);
            let model = build_model::<f64>(&spec)?;
            let name = match dim {
                Some(d) => format!("{}[{d}]", spec.name),
                None => spec.name.clone(),
            };
            let mut grid = b.theta_grid(model.dim());
            if b == Builtin::DegenerateSumGaussian {
                grid = vec![vec![0.0, 0.0], vec![0.3, -0.1]];
            }
            for theta in grid {
                verify_point(&mut suite, b, &name, &model, &theta, seed);
            }
        }
    }
    let ns = log_grid(2, 6, 4);
    for (k, spec) in spec_library().iter().enumerate() {
        let subject = format!("singular-spec-{k}");
        match singular_report(spec, &ns, None) {
            Ok(r) => {
                suite.at_most(&subject, &[], "z_slope_vs_rlct", (r.z_fit.slope + r.lambda).abs(), 0.02);
                let tol = if spec.is_regular() { 0.02 } else { 0.05 };
                suite.at_most(&subject, &[], "mse_slope_vs_rate", (r.mse_fit.slope + r.mse_rate).abs(), tol);
            }
            Err(_) => suite.failure(&subject, &[], "singular_report"),
        }
    }
    let failed: Vec<&Check> = suite.checks.iter().filter(|c| !c.pass).collect();
    let passed = failed.is_empty();
    let mut csv = Csv::new(&["subject", "theta", "check", "value", "relation", "limit", "pass"]);
    for c in &suite.checks {
        csv.row(&[
            c.subject.clone(),
            c.theta.iter().map(|&t| num(t)).collect::<Vec<_>>().join(" "),
            c.check.into(),
            num(c.value),
            c.relation.into(),
            num(c.limit),
            c.pass.to_string(),
        ]);
    }
    let doc = json!({
        "passed": passed,
        "total": suite.checks.len(),
        "failed": failed.len(),
        "failures": failed,
        "checks": suite.checks,
    });
    Ok(RunOutput {
        artifacts: vec![json_artifact("verify.json", config, doc), csv.into_artifact("verify.csv")],
        passed,
    })
}

/// Sample sizes used by `singular` without `--n-grid`.
pub fn default_singular_grid() -> Vec<f64> {
    log_grid(2, 6, 4)
}

fn singular(config: &RunConfig) -> Result<RunOutput, Error> {
    let input = config.spec.as_ref().expect("validated");
    let ns = config.n_grid.clone().unwrap_or_else(default_singular_grid);
    let report = singular_report(&input.spec, &ns, input.b.as_deref())?;
    let mut csv = Csv::new(&["n", "z_n", "posterior_mse"]);
    for ((n, z), m) in report.n_grid.iter().zip(&report.z_values).zip(&report.posterior_mse) {
        csv.row(&[num(*n), num(*z), num(*m)]);
    }
    Ok(RunOutput {
        artifacts: vec![
            json_artifact("singular.json", config, json!({ "spec": input, "report": report })),
            csv.into_artifact("singular.csv"),
        ],
        passed: true,
    })
}
