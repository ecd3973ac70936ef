use serde::{Deserialize, Serialize};

use super::{check_theta, to_f64, ParametricModel, Scores};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::scalar::Scalar;

/// Relative error above which an analytic derivative is flagged as wrong.
pub const DERIVATIVE_FAILURE_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeCheck {
    pub trials: usize,
    /// Largest relative error for orders 1, 2 and 3.
    pub max_error: [f64; 3],
    pub passed: bool,
}

/// Compares analytic scores against Richardson-extrapolated central
/// differences: order 1 against `log_density`, order 2 against `s1`, order 3
/// against `s2`. Errors are relative to `max(1, |analytic|)`.
pub fn check_derivatives<T: Scalar, M: ParametricModel<T> + ?Sized>(
    model: &M,
    theta: &[T],
    trials: usize,
    seed: u64,
) -> Result<DerivativeCheck> {
    check_theta(model, theta)?;
    if !model.in_parameter_space(theta) {
        return Err(Error::Domain {
            model: model.name(),
            theta: to_f64(theta),
        });
    }
    let d = model.dim();
    let m = model.space().point_dim();
    let stream = RngStream::new(seed);
    let mut x = vec![T::zero(); m];
    let mut exact = Scores::new(d);
    let mut plus = Scores::new(d);
    let mut minus = Scores::new(d);
    let mut max_error = [0.0f64; 3];

    for trial in 0..trials {
        let mut rng = stream.substream(trial as u64).rng();
        model.sample(theta, &mut rng, &mut x)?;
        model.scores(&x, theta, 3, &mut exact);
        if let Some((order, index)) = exact.first_non_finite(3) {
            return Err(Error::DerivativeEvaluation {
                order,
                x: to_f64(&x),
                theta: to_f64(theta),
                index,
            });
        }

        for i in 0..d {
            let h = T::lit(1e-3) * theta[i].abs().max(T::lit(0.1));
            // Richardson over steps h and h/2 of the central difference of every
            // lower-order quantity at once.
            let mut diff = |step: T| -> (T, Vec<T>, Vec<T>) {
                let mut tp = theta.to_vec();
                let mut tm = theta.to_vec();
                tp[i] += step;
                tm[i] -= step;
                model.scores(&x, &tp, 2, &mut plus);
                model.scores(&x, &tm, 2, &mut minus);
                let den = T::lit(2.0) * step;
                let dl = (model.log_density(&x, &tp) - model.log_density(&x, &tm)) / den;
                let d1 = plus.s1.iter().zip(&minus.s1).map(|(&a, &b)| (a - b) / den).collect();
                let d2 = plus.s2.iter().zip(&minus.s2).map(|(&a, &b)| (a - b) / den).collect();
                (dl, d1, d2)
            };
            let (l_h, s1_h, s2_h) = diff(h);
            let (l_h2, s1_h2, s2_h2) = diff(h * T::lit(0.5));
            let rich = |coarse: T, fine: T| (T::lit(4.0) * fine - coarse) / T::lit(3.0);
            let rel = |analytic: T, numeric: T| -> f64 {
                ((analytic - numeric).abs() / analytic.abs().max(T::one())).as_f64()
            };

            max_error[0] = max_error[0].max(rel(exact.s1[i], rich(l_h, l_h2)));
            for j in 0..d {
                let fd = rich(s1_h[j], s1_h2[j]);
                max_error[1] = max_error[1].max(rel(exact.s2(j, i), fd));
                for k in 0..d {
                    let fd = rich(s2_h[j * d + k], s2_h2[j * d + k]);
                    max_error[2] = max_error[2].max(rel(exact.s3(j, k, i), fd));
                }
            }
        }
    }
    let passed = max_error.iter().all(|&e| e <= DERIVATIVE_FAILURE_TOL);
    Ok(DerivativeCheck {
        trials,
        max_error,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, Builtin, ModelSpec, Poisson, SampleSpace};
    use rand::RngCore;

    /// Poisson with the second score's sign flipped.
    struct FlippedPoisson;

    impl ParametricModel<f64> for FlippedPoisson {
        fn name(&self) -> String {
            "flipped-poisson".into()
        }
        fn dim(&self) -> usize {
            1
        }
        fn space(&self) -> SampleSpace {
            ParametricModel::<f64>::space(&Poisson)
        }
        fn log_density(&self, x: &[f64], theta: &[f64]) -> f64 {
            Poisson.log_density(x, theta)
        }
        fn scores(&self, x: &[f64], theta: &[f64], order: usize, out: &mut Scores<f64>) {
            Poisson.scores(x, theta, order, out);
            out.s2[0] = -out.s2[0];
        }
        fn sample(&self, theta: &[f64], rng: &mut dyn RngCore, out: &mut [f64]) -> Result<()> {
            Poisson.sample(theta, rng, out)
        }
        fn in_regular_domain(&self, theta: &[f64]) -> bool {
            ParametricModel::<f64>::in_regular_domain(&Poisson, theta)
        }
    }

    #[test]
    fn builtins_pass() {
        for b in Builtin::ALL {
            let dim = b.dim(Some(3));
            let spec = ModelSpec::new(b.registry_name(), (b == Builtin::GaussianMean).then_some(3));
            let model = build_model::<f64>(&spec).unwrap();
            let grid = if b == Builtin::DegenerateSumGaussian { vec![vec![0.4, -0.2]] } else { b.theta_grid(dim) };
            for theta in grid {
                let check = check_derivatives(&*model, &theta, 10, 7).unwrap();
                assert!(check.passed, "{} {:?}: {:?}", spec.name, theta, check.max_error);
            }
        }
    }

    #[test]
    fn wrong_sign_is_caught() {
        let check = check_derivatives(&FlippedPoisson, &[2.0], 10, 7).unwrap();
        assert!(!check.passed);
        assert!(check.max_error[0] <= DERIVATIVE_FAILURE_TOL);
        assert!(check.max_error[1] > 0.1);
    }

    #[test]
    fn outside_parameter_space_rejected() {
        assert!(matches!(check_derivatives(&Poisson, &[-1.0f64], 3, 1), Err(Error::Domain { .. })));
        assert!(matches!(check_derivatives(&Poisson, &[1.0f64, 2.0], 3, 1), Err(Error::InvalidInput(_))));
    }
}
