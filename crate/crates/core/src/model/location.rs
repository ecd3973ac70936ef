use rand::RngCore;
use rand_distr::{Cauchy, Distribution};

use super::{ParametricModel, QuadratureFrame, SampleSpace, Scores, SpaceKind, WeightHint};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Standard Cauchy with location `θ`.
///
/// With `r = x − θ`: `s = 2r/(1+r²)`, `s₁₁ = −2(1−r²)/(1+r²)²`,
/// `s₁₁₁ = 4r(r²−3)/(1+r²)³`. All three are bounded in `x`, so every score
/// moment exists despite the heavy tails of the density.
#[derive(Debug, Clone, Copy, Default)]
pub struct CauchyLocation;

impl<T: Scalar> ParametricModel<T> for CauchyLocation {
    fn name(&self) -> String {
        "cauchy-location".into()
    }

    fn dim(&self) -> usize {
        1
    }

    fn space(&self) -> SampleSpace {
        SampleSpace::new(SpaceKind::RealLine, WeightHint::HeavyTailed).expect("valid")
    }

    fn log_density(&self, x: &[T], theta: &[T]) -> T {
        let r = x[0] - theta[0];
        -T::PI().ln() - (T::one() + r * r).ln()
    }

    fn scores(&self, x: &[T], theta: &[T], order: usize, out: &mut Scores<T>) {
        let r = x[0] - theta[0];
        let q = T::one() + r * r;
        let two = T::lit(2.0);
        out.s1[0] = two * r / q;
        if order >= 2 {
            out.s2[0] = -two * (T::one() - r * r) / (q * q);
        }
        if order >= 3 {
            out.s3[0] = T::lit(4.0) * r * (r * r - T::lit(3.0)) / (q * q * q);
        }
    }

    fn sample(&self, theta: &[T], rng: &mut dyn RngCore, out: &mut [T]) -> Result<()> {
        let dist = Cauchy::new(theta[0].as_f64(), 1.0)
            .map_err(|e| Error::Sampling(format!("cauchy location {}: {e}", theta[0])))?;
        let x: f64 = dist.sample(rng);
        out[0] = T::lit(x);
        Ok(())
    }

    fn in_regular_domain(&self, theta: &[T]) -> bool {
        theta[0].is_finite()
    }

    fn quadrature_frame(&self, theta: &[T]) -> Option<QuadratureFrame<T>> {
        Some(QuadratureFrame {
            center: vec![theta[0]],
            scale: vec![T::one()],
        })
    }
}
