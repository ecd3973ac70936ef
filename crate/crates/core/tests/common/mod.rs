#![allow(dead_code)]

use fisher_curvature::model::{build_model, Builtin, ModelSpec};
use fisher_curvature::ParametricModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Model = Box<dyn ParametricModel<f64>>;

/// Every built-in paired with its spec; `gaussian-mean` appears in dimensions 1 and 3.
pub fn builtins() -> Vec<(Builtin, ModelSpec, Model)> {
    let mut out = Vec::new();
    for b in Builtin::ALL {
        let dims: Vec<Option<usize>> = if b == Builtin::GaussianMean { vec![Some(1), Some(3)] } else { vec![None] };
        for dim in dims {
            let spec = ModelSpec::new(b.registry_name(), dim);
            let model = build_model::<f64>(&spec).unwrap();
            out.push((b, spec, model));
        }
    }
    out
}

pub fn regular_builtins() -> Vec<(Builtin, ModelSpec, Model)> {
    builtins().into_iter().filter(|(b, _, _)| *b != Builtin::DegenerateSumGaussian).collect()
}

pub fn grid(b: Builtin, model: &Model) -> Vec<Vec<f64>> {
    b.theta_grid(model.dim())
}

/// Uniform draws from a box inside the parameter space.
pub fn random_thetas(b: Builtin, dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let (lo, hi) = match b {
        Builtin::Poisson => (0.2, 10.0),
        Builtin::Bernoulli => (0.05, 0.95),
        Builtin::CauchyLocation => (-3.0, 3.0),
        _ => (-1.5, 1.5),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| (0..dim).map(|_| rng.random_range(lo..hi)).collect()).collect()
}

use fisher_curvature::correction::{analyze, correction_report_in, NormalChart};
use fisher_curvature::linalg::{congruence, sym_condition, sym_eigen, matmul, transpose};
use fisher_curvature::model::QuadraticReparam;
use fisher_curvature::{ExpectationEngine, FdPolicy, Tensor64};

fn uniform_tensor(rng: &mut ChaCha8Rng, dim: usize, rank: usize, half_width: f64) -> Tensor64 {
    Tensor64::from_fn(dim, rank, |_| rng.random_range(-half_width..half_width))
}

/// Random well-conditioned quadratic change of coordinates through `theta0`.
pub fn random_reparam(model: Model, theta0: &[f64], seed: u64) -> (QuadraticReparam<f64, Model>, Vec<f64>, Tensor64) {
    let d = theta0.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let linear = loop {
        let b = Tensor64::identity(d).add(&uniform_tensor(&mut rng, d, 2, 0.6));
        if sym_condition(&matmul(&transpose(&b), &b)) < 400.0 {
            break b;
        }
    };
    let quadratic = uniform_tensor(&mut rng, d, 3, 0.5);
    let u0: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let reparam = QuadraticReparam::new(model, theta0.to_vec(), u0.clone(), linear.clone(), quadratic).unwrap();
    (reparam, u0, linear)
}

/// `max |P_u − BᵀPB|` relative to `max |BᵀPB|`, floored at `1e-8 max |BᵀgB|`
/// so that a vanishing `P` is compared on the metric's scale.
pub fn tensoriality_error(make: impl Fn() -> Model, theta0: &[f64], seed: u64) -> f64 {
    let model = make();
    let engine = ExpectationEngine::default_for(&*model);
    let base = analyze(&*model, theta0, &engine, FdPolicy::default()).unwrap();
    let (reparam, u0, b) = random_reparam(make(), theta0, seed);
    let moved = analyze(&reparam, &u0, &engine, FdPolicy::default()).unwrap();
    // congruence(m, b) = bᵀ m b with b indexed (i, a)
    let pulled = congruence(&base.correction.p_user, &b);
    let g_pulled = congruence(&base.correction.fisher, &b);
    let diff = moved.correction.p_user.max_abs_diff(&pulled);
    diff / pulled.max_abs().max(1e-8 * g_pulled.max_abs())
}

/// `P_user` recomputed in a normal chart whose linear part is `g^{-1/2}Q` for
/// a random orthogonal `Q`; returns the largest absolute change.
pub fn rotation_change(model: &Model, theta0: &[f64], seed: u64) -> f64 {
    let engine = ExpectationEngine::default_for(&**model);
    let a = analyze(&**model, theta0, &engine, FdPolicy::default()).unwrap();
    let d = theta0.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sym = uniform_tensor(&mut rng, d, 2, 1.0).symmetrize_full();
    let q = sym_eigen(&sym).vectors;
    let linear = matmul(&a.correction.chart.a, &q);
    let chart = NormalChart::from_linear(theta0.to_vec(), linear, &a.geometry.christoffel);
    let rotated = correction_report_in(&a.moments, &a.geometry, &a.immersion, chart).unwrap();
    rotated.p_user.max_abs_diff(&a.correction.p_user)
}
