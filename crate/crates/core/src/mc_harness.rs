//! Monte Carlo check of the covariance expansion: simulate score-root
//! estimators over a grid of sample sizes, estimate their covariance with
//! jackknife errors, and fit `n·Cov(n) = C1 + C2/n`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correction::CorrectionReport;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{check_theta, sample_batch, to_f64, ParametricModel, Scores};
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Newton controls for [`mle_solve`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MleControls {
    pub max_steps: usize,
    /// Convergence when `‖Σ_t s(x_t, θ)‖ ≤ grad_tol · n`.
    pub grad_tol: f64,
    /// Cap on the Euclidean norm of a single step.
    pub max_step_norm: f64,
}

impl Default for MleControls {
    fn default() -> Self {
        Self {
            max_steps: 100,
            grad_tol: 1e-10,
            max_step_norm: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
#[serde(bound = "T: Scalar")]
pub enum MleOutcome<T> {
    Converged { theta: Vec<T>, steps: usize },
    NonConvergence { theta: Vec<T>, steps: usize },
    DomainExit { theta: Vec<T> },
}

impl<T: Scalar> MleOutcome<T> {
    pub fn estimate(&self) -> Option<&[T]> {
        match self {
            Self::Converged { theta, .. } => Some(theta),
            _ => None,
        }
    }
}

fn norm<T: Scalar>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

/// Damped Newton on the score equation `Σ_t s(x_t, θ) = 0` from `init`.
///
/// When the negative observed Hessian is not positive definite it is
/// shifted until it is. Steps leaving the regular domain are halved; after
/// 40 halvings the solve stops with [`MleOutcome::DomainExit`].
pub fn mle_solve<T: Scalar, M: ParametricModel<T> + ?Sized>(
    model: &M,
    data: &[T],
    init: &[T],
    controls: &MleControls,
) -> Result<MleOutcome<T>> {
    check_theta(model, init)?;
    let m = model.space().point_dim();
    if data.is_empty() || data.len() % m != 0 {
        return Err(Error::InvalidInput("data must hold at least one complete point".into()));
    }
    let n = T::from_usize_lossy(data.len() / m);
    let d = model.dim();
    let tol = T::lit(controls.grad_tol) * n;
    let cap = T::lit(controls.max_step_norm);
    let mut theta = init.to_vec();
    let mut acc = Scores::new(d);
    for step in 0..=controls.max_steps {
        model.accumulate_scores(data, &theta, 2, &mut acc);
        if acc.first_non_finite(2).is_some() {
            return Ok(MleOutcome::NonConvergence { theta, steps: step });
        }
        if norm(&acc.s1) <= tol {
            return Ok(MleOutcome::Converged { theta, steps: step });
        }
        if step == controls.max_steps {
            break;
        }
        let neg_h = Tensor::from_fn(d, 2, |ix| -acc.s2(ix[0], ix[1])).symmetrize_full();
        let eig = linalg::sym_eigen(&neg_h);
        let lo = eig.values[0];
        let hi = eig.values[d - 1].abs();
        let floor = T::lit(1e-8) * hi.max(n);
        let shift = if lo > floor { T::zero() } else { floor - lo + norm(&acc.s1) };
        let inv = linalg::sym_apply(&eig, |v| T::one() / (v + shift));
        let mut delta = linalg::matvec(&inv, &acc.s1);
        let len = norm(&delta);
        if len > cap {
            delta.iter_mut().for_each(|x| *x *= cap / len);
        }
        let mut halvings = 0;
        loop {
            let candidate: Vec<T> = theta.iter().zip(&delta).map(|(&t, &s)| t + s).collect();
            if model.in_regular_domain(&candidate) {
                theta = candidate;
                break;
            }
            halvings += 1;
            if halvings > 40 {
                return Ok(MleOutcome::DomainExit { theta: candidate });
            }
            delta.iter_mut().for_each(|x| *x *= T::lit(0.5));
        }
    }
    Ok(MleOutcome::NonConvergence {
        theta,
        steps: controls.max_steps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationPlan {
    pub theta_true: Vec<f64>,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
    pub mle: MleControls,
    /// Largest tolerated fraction of non-converged replicates.
    pub drop_budget: f64,
}

pub const MIN_REPLICATES: usize = 1000;
pub const DEFAULT_DROP_BUDGET: f64 = 1e-3;

impl SimulationPlan {
    pub fn new(theta_true: Vec<f64>, n_grid: Vec<usize>, replicates: usize, seed: u64) -> Self {
        Self {
            theta_true,
            n_grid,
            replicates,
            seed,
            mle: MleControls::default(),
            drop_budget: DEFAULT_DROP_BUDGET,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() || self.n_grid[0] == 0 || self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("n_grid must be non-empty, positive and strictly increasing".into()));
        }
        if self.replicates < MIN_REPLICATES {
            return Err(Error::InvalidInput(format!(
                "at least {MIN_REPLICATES} replicates are required, got {}",
                self.replicates
            )));
        }
        if !(0.0..1.0).contains(&self.drop_budget) {
            return Err(Error::InvalidInput("drop budget must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Statistics at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSizeResult {
    pub n: usize,
    /// Replicates that produced an estimate.
    pub kept: usize,
    pub dropped: usize,
    pub domain_exits: usize,
    /// Empirical covariance (divisor `kept − 1`).
    pub cov: Tensor<f64>,
    /// Jackknife standard errors of `cov`.
    pub cov_se: Tensor<f64>,
    /// Mean estimate minus the true value.
    pub bias: Vec<f64>,
    pub bias_se: Vec<f64>,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub model: String,
    pub plan: SimulationPlan,
    pub per_n: Vec<SampleSizeResult>,
}

impl SimulationResult {
    /// Every sample size stayed within the drop budget.
    pub fn valid(&self) -> bool {
        self.per_n.iter().all(|r| r.valid)
    }
}

/// Covariance with divisor `R − 1` and its leave-one-out jackknife standard
/// error. With `a_r = (x_r − x̄)(y_r − ȳ)` the deleted estimates are affine
/// in `a_r`, which gives `var_jk = R/((R−1)(R−2)²) Σ (a_r − ā)²`.
pub fn covariance_with_jackknife(samples: &[Vec<f64>]) -> Result<(Tensor<f64>, Tensor<f64>, Vec<f64>)> {
    let r = samples.len();
    if r < 3 {
        return Err(Error::InvalidInput("covariance needs at least three samples".into()));
    }
    let d = samples[0].len();
    let rf = r as f64;
    let mean: Vec<f64> = (0..d).map(|i| samples.iter().map(|s| s[i]).sum::<f64>() / rf).collect();
    let mut cov = Tensor::zeros(d, 2);
    let mut se = Tensor::zeros(d, 2);
    for i in 0..d {
        for j in i..d {
            let prod = |s: &Vec<f64>| (s[i] - mean[i]) * (s[j] - mean[j]);
            let total: f64 = samples.iter().map(prod).sum();
            let abar = total / rf;
            let spread: f64 = samples.iter().map(|s| (prod(s) - abar).powi(2)).sum();
            let c = total / (rf - 1.0);
            let v = rf / ((rf - 1.0) * (rf - 2.0).powi(2)) * spread;
            *cov.at2_mut(i, j) = c;
            *cov.at2_mut(j, i) = c;
            *se.at2_mut(i, j) = v.sqrt();
            *se.at2_mut(j, i) = v.sqrt();
        }
    }
    Ok((cov, se, mean))
}

/// Runs the plan. Replicate `r` at grid index `k` draws from the stream
/// `(seed, k, r)`, so the result does not depend on the thread count.
pub fn simulate_covariance<T: Scalar, M: ParametricModel<T> + ?Sized>(
    model: &M,
    plan: &SimulationPlan,
) -> Result<SimulationResult> {
    plan.validate()?;
    let theta: Vec<T> = plan.theta_true.iter().map(|&x| T::lit(x)).collect();
    check_theta(model, &theta)?;
    if !model.in_regular_domain(&theta) {
        return Err(Error::Domain {
            model: model.name(),
            theta: plan.theta_true.clone(),
        });
    }
    let master = RngStream::new(plan.seed);
    let mut per_n = Vec::with_capacity(plan.n_grid.len());
    for (k, &n) in plan.n_grid.iter().enumerate() {
        let stream = master.substream(k as u64);
        let outcomes: Vec<MleOutcome<T>> = (0..plan.replicates)
            .into_par_iter()
            .map(|r| {
                let data = sample_batch(model, &theta, n, &stream.substream(r as u64))?;
                mle_solve(model, &data, &theta, &plan.mle)
            })
            .collect::<Result<_>>()?;
        let mut kept = Vec::with_capacity(outcomes.len());
        let mut domain_exits = 0;
        for o in &outcomes {
            match o {
                MleOutcome::Converged { theta, .. } => kept.push(to_f64(theta)),
                MleOutcome::DomainExit { .. } => domain_exits += 1,
                MleOutcome::NonConvergence { .. } => {}
            }
        }
        let dropped = plan.replicates - kept.len();
        let (cov, cov_se, mean) = covariance_with_jackknife(&kept)?;
        let kf = kept.len() as f64;
        let bias = mean.iter().zip(&plan.theta_true).map(|(m, t)| m - t).collect();
        let bias_se = (0..theta.len()).map(|i| (cov.at2(i, i) / kf).sqrt()).collect();
        per_n.push(SampleSizeResult {
            n,
            kept: kept.len(),
            dropped,
            domain_exits,
            cov,
            cov_se,
            bias,
            bias_se,
            valid: dropped as f64 <= plan.drop_budget * plan.replicates as f64,
        });
    }
    Ok(SimulationResult {
        model: model.name(),
        plan: plan.clone(),
        per_n,
    })
}

/// Weighted least-squares fit of `y = c1 + c2/n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub c1: f64,
    pub c2: f64,
    pub c1_se: f64,
    pub c2_se: f64,
    /// Weighted residual sum of squares.
    pub chi2: f64,
    pub condition: f64,
}

pub const MAX_FIT_CONDITION: f64 = 1e8;

/// Fits `y_n = c1 + c2/n` with weights `1/se_n²`; if any standard error is
/// not positive, all points get unit weight.
pub fn fit_series(ns: &[usize], y: &[f64], se: &[f64]) -> Result<LineFit> {
    if ns.len() < 3 || ns.len() != y.len() || y.len() != se.len() {
        return Err(Error::InvalidInput("fit needs at least three matching points".into()));
    }
    let weighted = se.iter().all(|&s| s > 0.0 && s.is_finite());
    let w: Vec<f64> = se.iter().map(|&s| if weighted { 1.0 / (s * s) } else { 1.0 }).collect();
    let x: Vec<f64> = ns.iter().map(|&n| 1.0 / n as f64).collect();
    let (mut s00, mut s01, mut s11, mut b0, mut b1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for k in 0..x.len() {
        s00 += w[k];
        s01 += w[k] * x[k];
        s11 += w[k] * x[k] * x[k];
        b0 += w[k] * y[k];
        b1 += w[k] * x[k] * y[k];
    }
    let normal = Tensor::from_vec(2, 2, vec![s00, s01, s01, s11]);
    let condition = linalg::sym_condition(&normal).sqrt();
    if !(condition <= MAX_FIT_CONDITION) {
        return Err(Error::IllConditionedFit { condition });
    }
    let det = s00 * s11 - s01 * s01;
    let c1 = (s11 * b0 - s01 * b1) / det;
    let c2 = (s00 * b1 - s01 * b0) / det;
    let chi2: f64 = (0..x.len()).map(|k| w[k] * (y[k] - c1 - c2 * x[k]).powi(2)).sum();
    // Without real weights the residual scatter stands in for the noise level.
    let sigma2 = if weighted { 1.0 } else { chi2 / (x.len() - 2) as f64 };
    Ok(LineFit {
        c1,
        c2,
        c1_se: (sigma2 * s11 / det).sqrt(),
        c2_se: (sigma2 * s00 / det).sqrt(),
        chi2,
        condition,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryFit {
    pub i: usize,
    pub j: usize,
    pub fit: LineFit,
    /// `(I⁻¹)_ij`
    pub c1_pred: f64,
    /// `(I⁻¹PI⁻¹)_ij`
    pub c2_pred: f64,
    pub z1: f64,
    pub z2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionFit {
    pub entries: Vec<EntryFit>,
}

impl ExpansionFit {
    pub fn max_abs_z(&self) -> f64 {
        self.entries.iter().map(|e| e.z1.abs().max(e.z2.abs())).fold(0.0, f64::max)
    }

    pub fn passes(&self, z_threshold: f64) -> bool {
        self.max_abs_z() <= z_threshold
    }

    pub fn entry(&self, i: usize, j: usize) -> Option<&EntryFit> {
        self.entries.iter().find(|e| e.i == i && e.j == j)
    }
}

/// Fits every covariance entry (`i ≤ j`) against `c1_pred` and `c2_pred`.
pub fn fit_against(result: &SimulationResult, c1_pred: &Tensor<f64>, c2_pred: &Tensor<f64>) -> Result<ExpansionFit> {
    let d = c1_pred.dim();
    let ns: Vec<usize> = result.per_n.iter().map(|r| r.n).collect();
    let mut entries = Vec::new();
    for i in 0..d {
        for j in i..d {
            let y: Vec<f64> = result.per_n.iter().map(|r| r.n as f64 * r.cov.at2(i, j)).collect();
            let se: Vec<f64> = result.per_n.iter().map(|r| r.n as f64 * r.cov_se.at2(i, j)).collect();
            let fit = fit_series(&ns, &y, &se)?;
            let (p1, p2) = (c1_pred.at2(i, j), c2_pred.at2(i, j));
            entries.push(EntryFit {
                i,
                j,
                fit,
                c1_pred: p1,
                c2_pred: p2,
                z1: (fit.c1 - p1) / fit.c1_se,
                z2: (fit.c2 - p2) / fit.c2_se,
            });
        }
    }
    Ok(ExpansionFit { entries })
}

/// Compares the fitted coefficients with `I⁻¹` and `I⁻¹PI⁻¹`.
pub fn fit_expansion<T: Scalar>(result: &SimulationResult, prediction: &CorrectionReport<T>) -> Result<ExpansionFit> {
    fit_against(
        result,
        &prediction.fisher_inv.cast(),
        &prediction.second_order_coefficient().cast(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CurvedGaussian, EfronMap, IdentityMap, Poisson};

    #[test]
    fn gaussian_mean_root_is_sample_mean() {
        let model = CurvedGaussian::<f64, _>::new(IdentityMap::new(1));
        let data = [0.2f64, 1.1, 0.8];
        let out = mle_solve(&model, &data, &[0.0], &MleControls::default()).unwrap();
        let est = out.estimate().unwrap()[0];
        assert!((est - 0.7).abs() < 1e-12, "{out:?}");
    }

    #[test]
    fn poisson_root_is_sample_mean() {
        let data = [1.0f64, 3.0, 2.0, 4.0, 1.0];
        let out = mle_solve(&Poisson, &data, &[2.0], &MleControls::default()).unwrap();
        assert!((out.estimate().unwrap()[0] - 2.2).abs() < 1e-10, "{out:?}");
    }

    #[test]
    fn efron_estimate_in_normal_band() {
        let model = CurvedGaussian::<f64, _>::new(EfronMap);
        let data = sample_batch(&model, &[0.0], 200, &RngStream::new(11)).unwrap();
        let est = mle_solve(&model, &data, &[0.0], &MleControls::default()).unwrap();
        assert!(est.estimate().unwrap()[0].abs() < 5.0 / 200f64.sqrt());
    }

    #[test]
    fn empty_data_rejected() {
        assert!(mle_solve(&Poisson, &[], &[1.0], &MleControls::default()).is_err());
    }

    #[test]
    fn jackknife_matches_brute_force() {
        let s: Vec<Vec<f64>> = (0..9)
            .map(|k| {
                let t = k as f64;
                vec![(t * 0.7).sin(), t * 0.1 + (t * 1.3).cos()]
            })
            .collect();
        let (cov, se, _) = covariance_with_jackknife(&s).unwrap();
        let cov_of = |v: &[Vec<f64>], i: usize, j: usize| {
            let r = v.len() as f64;
            let mi = v.iter().map(|x| x[i]).sum::<f64>() / r;
            let mj = v.iter().map(|x| x[j]).sum::<f64>() / r;
            v.iter().map(|x| (x[i] - mi) * (x[j] - mj)).sum::<f64>() / (r - 1.0)
        };
        for (i, j) in [(0, 0), (0, 1), (1, 1)] {
            assert!((cov.at2(i, j) - cov_of(&s, i, j)).abs() < 1e-14);
            let loo: Vec<f64> = (0..s.len())
                .map(|k| {
                    let rest: Vec<Vec<f64>> = s.iter().enumerate().filter(|&(m, _)| m != k).map(|(_, x)| x.clone()).collect();
                    cov_of(&rest, i, j)
                })
                .collect();
            let r = s.len() as f64;
            let m = loo.iter().sum::<f64>() / r;
            let jk = ((r - 1.0) / r * loo.iter().map(|c| (c - m).powi(2)).sum::<f64>()).sqrt();
            assert!((se.at2(i, j) - jk).abs() < 1e-13, "{} vs {jk}", se.at2(i, j));
        }
    }

    #[test]
    fn fit_recovers_exact_expansion() {
        let ns = [25, 50, 100, 200, 400];
        let y: Vec<f64> = ns.iter().map(|&n| 1.0 + 4.0 / n as f64).collect();
        let fit = fit_series(&ns, &y, &[0.0; 5]).unwrap();
        assert!((fit.c1 - 1.0).abs() < 1e-10);
        assert!((fit.c2 - 4.0).abs() < 1e-10);
        let fit = fit_series(&ns, &y, &[0.01, 0.01, 0.02, 0.02, 0.03]).unwrap();
        assert!((fit.c1 - 1.0).abs() < 1e-10);
        assert!((fit.c2 - 4.0).abs() < 1e-10);
    }

    #[test]
    fn degenerate_design_rejected() {
        let ns = [1_000_000_000, 1_000_000_001, 1_000_000_002];
        let err = fit_series(&ns, &[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::IllConditionedFit { .. }));
    }

    #[test]
    fn plan_validation() {
        assert!(SimulationPlan::new(vec![0.0], vec![10, 20], 1000, 1).validate().is_ok());
        assert!(SimulationPlan::new(vec![0.0], vec![20, 10], 1000, 1).validate().is_err());
        assert!(SimulationPlan::new(vec![0.0], vec![10, 20], 999, 1).validate().is_err());
    }

    #[test]
    fn gaussian_mean_simulation_is_exact_and_deterministic() {
        let model = CurvedGaussian::<f64, _>::new(IdentityMap::new(1));
        let plan = SimulationPlan::new(vec![0.0], vec![5, 10, 20], 4000, 3);
        let a = simulate_covariance(&model, &plan).unwrap();
        let b = simulate_covariance(&model, &plan).unwrap();
        assert_eq!(a, b);
        for r in &a.per_n {
            assert_eq!(r.dropped, 0);
            let n = r.n as f64;
            assert!((n * r.cov.at2(0, 0) - 1.0).abs() <= 3.0 * n * r.cov_se.at2(0, 0), "{r:?}");
            assert!(r.bias[0].abs() <= 3.0 * r.bias_se[0]);
        }
    }

    #[test]
    fn thread_count_does_not_change_result() {
        let model = CurvedGaussian::<f64, _>::new(EfronMap);
        let plan = SimulationPlan::new(vec![0.3], vec![10, 20, 40], 1000, 9);
        let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let wide = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = serial.install(|| simulate_covariance(&model, &plan)).unwrap();
        let b = wide.install(|| simulate_covariance(&model, &plan)).unwrap();
        assert_eq!(a, b);
    }
}
