use rand::{Rng, RngCore};
use rand_distr::Distribution;
use statrs::function::gamma::ln_gamma;

use super::{ParametricModel, SampleSpace, Scores, SpaceKind, WeightHint};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Poisson with rate `θ > 0`: `s = x/θ − 1`, `s₁₁ = −x/θ²`, `s₁₁₁ = 2x/θ³`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Poisson;

impl<T: Scalar> ParametricModel<T> for Poisson {
    fn name(&self) -> String {
        "poisson".into()
    }

    fn dim(&self) -> usize {
        1
    }

    fn space(&self) -> SampleSpace {
        SampleSpace::new(SpaceKind::NonnegIntegers, WeightHint::Discrete).expect("valid")
    }

    fn log_density(&self, x: &[T], theta: &[T]) -> T {
        let (x, t) = (x[0], theta[0]);
        x * t.ln() - t - T::lit(ln_gamma(x.as_f64() + 1.0))
    }

    fn scores(&self, x: &[T], theta: &[T], order: usize, out: &mut Scores<T>) {
        let (x, t) = (x[0], theta[0]);
        out.s1[0] = x / t - T::one();
        if order >= 2 {
            out.s2[0] = -x / (t * t);
        }
        if order >= 3 {
            out.s3[0] = T::lit(2.0) * x / (t * t * t);
        }
    }

    fn sample(&self, theta: &[T], rng: &mut dyn RngCore, out: &mut [T]) -> Result<()> {
        let dist = rand_distr::Poisson::new(theta[0].as_f64())
            .map_err(|e| Error::Sampling(format!("poisson rate {}: {e}", theta[0])))?;
        let k: f64 = dist.sample(rng);
        out[0] = T::lit(k);
        Ok(())
    }

    fn in_regular_domain(&self, theta: &[T]) -> bool {
        theta[0] > T::zero() && theta[0].is_finite()
    }
}

/// Bernoulli with success probability `θ ∈ (0, 1)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Bernoulli;

impl<T: Scalar> ParametricModel<T> for Bernoulli {
    fn name(&self) -> String {
        "bernoulli".into()
    }

    fn dim(&self) -> usize {
        1
    }

    fn space(&self) -> SampleSpace {
        SampleSpace::new(SpaceKind::FiniteSet(2), WeightHint::Discrete).expect("valid")
    }

    fn log_density(&self, x: &[T], theta: &[T]) -> T {
        let (x, t) = (x[0], theta[0]);
        let one = T::one();
        x * t.ln() + (one - x) * (one - t).ln()
    }

    fn scores(&self, x: &[T], theta: &[T], order: usize, out: &mut Scores<T>) {
        let (x, t) = (x[0], theta[0]);
        let one = T::one();
        let u = one - t;
        out.s1[0] = x / t - (one - x) / u;
        if order >= 2 {
            out.s2[0] = -x / (t * t) - (one - x) / (u * u);
        }
        if order >= 3 {
            let two = T::lit(2.0);
            out.s3[0] = two * x / (t * t * t) - two * (one - x) / (u * u * u);
        }
    }

    fn sample(&self, theta: &[T], rng: &mut dyn RngCore, out: &mut [T]) -> Result<()> {
        let u: f64 = rng.random();
        out[0] = if u < theta[0].as_f64() { T::one() } else { T::zero() };
        Ok(())
    }

    fn in_regular_domain(&self, theta: &[T]) -> bool {
        theta[0] > T::zero() && theta[0] < T::one()
    }
}
