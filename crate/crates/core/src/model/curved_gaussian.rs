use std::marker::PhantomData;

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::{ParametricModel, QuadratureFrame, SampleSpace, Scores, SpaceKind, WeightHint};
use crate::error::Result;
use crate::scalar::Scalar;

/// Mean map `θ ↦ μ(θ) ∈ ℝᵐ` with derivatives through third order.
pub trait MeanMap<T: Scalar>: Send + Sync {
    fn name(&self) -> String;
    fn param_dim(&self) -> usize;
    fn out_dim(&self) -> usize;
    /// Fills `mu` (m), `jac` (m·d), `hess` (m·d·d), `third` (m·d·d·d), row-major
    /// with the output coordinate first.
    fn eval(&self, theta: &[T], mu: &mut [T], jac: &mut [T], hess: &mut [T], third: &mut [T]);
    /// Whether `JᵀJ` is positive definite at `theta`.
    fn is_regular(&self, theta: &[T]) -> bool;
}

/// Unit-covariance Gaussian on `ℝᵐ` whose mean follows a [`MeanMap`].
///
/// With `r = x − μ(θ)`:
/// `s_i = r·μ_i`, `s_ij = r·μ_ij − μ_i·μ_j`,
/// `s_ijk = r·μ_ijk − μ_k·μ_ij − μ_j·μ_ik − μ_i·μ_jk`.
#[derive(Debug, Clone)]
pub struct CurvedGaussian<T, M> {
    map: M,
    _scalar: PhantomData<T>,
}

impl<T: Scalar, M: MeanMap<T>> CurvedGaussian<T, M> {
    pub fn new(map: M) -> Self {
        Self {
            map,
            _scalar: PhantomData,
        }
    }

    pub fn mean_map(&self) -> &M {
        &self.map
    }

    fn derivs(&self, theta: &[T]) -> (Vec<T>, Vec<T>, Vec<T>, Vec<T>) {
        let (d, m) = (self.map.param_dim(), self.map.out_dim());
        let mut mu = vec![T::zero(); m];
        let mut jac = vec![T::zero(); m * d];
        let mut hess = vec![T::zero(); m * d * d];
        let mut third = vec![T::zero(); m * d * d * d];
        self.map.eval(theta, &mut mu, &mut jac, &mut hess, &mut third);
        (mu, jac, hess, third)
    }

    #[allow(clippy::type_complexity)]
    fn scores_with(
        &self,
        x: &[T],
        (mu, jac, hess, third): &(Vec<T>, Vec<T>, Vec<T>, Vec<T>),
        order: usize,
        out: &mut Scores<T>,
    ) {
        let (d, m) = (self.map.param_dim(), self.map.out_dim());
        let mut r = [T::zero(); 8];
        assert!(m <= r.len(), "mean maps beyond 8 outputs are not supported");
        for a in 0..m {
            r[a] = x[a] - mu[a];
        }
        let j = |a: usize, i: usize| jac[a * d + i];
        let h = |a: usize, i: usize, k: usize| hess[(a * d + i) * d + k];
        for i in 0..d {
            out.s1[i] = (0..m).map(|a| r[a] * j(a, i)).sum();
        }
        if order >= 2 {
            for i in 0..d {
                for k in 0..d {
                    let (p, q) = (i.min(k), i.max(k));
                    out.s2[i * d + k] = (0..m).map(|a| r[a] * h(a, p, q) - j(a, p) * j(a, q)).sum();
                }
            }
        }
        if order >= 3 {
            for i in 0..d {
                for jj in 0..d {
                    for k in 0..d {
                        // evaluate on the sorted triple so permutations agree bitwise
                        let mut t = [i, jj, k];
                        t.sort_unstable();
                        let [p, q, s] = t;
                        out.s3[(i * d + jj) * d + k] = (0..m)
                            .map(|a| {
                                r[a] * third[((a * d + p) * d + q) * d + s]
                                    - j(a, s) * h(a, p, q)
                                    - j(a, q) * h(a, p, s)
                                    - j(a, p) * h(a, q, s)
                            })
                            .sum();
                    }
                }
            }
        }
    }
}

impl<T: Scalar, M: MeanMap<T>> ParametricModel<T> for CurvedGaussian<T, M> {
    fn name(&self) -> String {
        self.map.name()
    }

    fn dim(&self) -> usize {
        self.map.param_dim()
    }

    fn space(&self) -> SampleSpace {
        SampleSpace::new(SpaceKind::RealVector(self.map.out_dim()), WeightHint::Gaussian)
            .expect("valid gaussian space")
    }

    fn log_density(&self, x: &[T], theta: &[T]) -> T {
        let (mu, ..) = self.derivs(theta);
        let half = T::lit(0.5);
        let sq: T = x.iter().zip(&mu).map(|(&a, &b)| (a - b) * (a - b)).sum();
        let m = T::from_usize_lossy(mu.len());
        -half * sq - half * m * (T::lit(2.0) * T::PI()).ln()
    }

    fn scores(&self, x: &[T], theta: &[T], order: usize, out: &mut Scores<T>) {
        let derivs = self.derivs(theta);
        self.scores_with(x, &derivs, order, out);
    }

    fn accumulate_scores(&self, data: &[T], theta: &[T], order: usize, acc: &mut Scores<T>) {
        let derivs = self.derivs(theta);
        let mut buf = Scores::new(self.dim());
        acc.clear();
        for x in data.chunks(self.map.out_dim()) {
            self.scores_with(x, &derivs, order, &mut buf);
            acc.add_assign(&buf, order);
        }
    }

    fn sample(&self, theta: &[T], rng: &mut dyn RngCore, out: &mut [T]) -> Result<()> {
        let (mu, ..) = self.derivs(theta);
        for (o, &c) in out.iter_mut().zip(&mu) {
            let z: f64 = StandardNormal.sample(rng);
            *o = c + T::lit(z);
        }
        Ok(())
    }

    fn in_regular_domain(&self, theta: &[T]) -> bool {
        theta.iter().all(|t| t.is_finite()) && self.map.is_regular(theta)
    }

    fn in_parameter_space(&self, theta: &[T]) -> bool {
        theta.iter().all(|t| t.is_finite())
    }

    fn quadrature_frame(&self, theta: &[T]) -> Option<QuadratureFrame<T>> {
        let (mu, ..) = self.derivs(theta);
        let scale = vec![T::one(); mu.len()];
        Some(QuadratureFrame { center: mu, scale })
    }
}

/// `μ(θ) = θ` — the Gaussian location family with identity covariance.
#[derive(Debug, Clone, Copy)]
pub struct IdentityMap {
    dim: usize,
}

impl IdentityMap {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1);
        Self { dim }
    }
}

impl<T: Scalar> MeanMap<T> for IdentityMap {
    fn name(&self) -> String {
        format!("gaussian-mean({})", self.dim)
    }
    fn param_dim(&self) -> usize {
        self.dim
    }
    fn out_dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, theta: &[T], mu: &mut [T], jac: &mut [T], hess: &mut [T], third: &mut [T]) {
        let d = self.dim;
        mu.copy_from_slice(theta);
        jac.iter_mut().for_each(|v| *v = T::zero());
        for i in 0..d {
            jac[i * d + i] = T::one();
        }
        hess.iter_mut().for_each(|v| *v = T::zero());
        third.iter_mut().for_each(|v| *v = T::zero());
    }
    fn is_regular(&self, _theta: &[T]) -> bool {
        true
    }
}

/// `μ(θ) = (θ, θ²)`: Efron's curved one-parameter Gaussian.
#[derive(Debug, Clone, Copy, Default)]
pub struct EfronMap;

impl<T: Scalar> MeanMap<T> for EfronMap {
    fn name(&self) -> String {
        "curved-gaussian-efron".into()
    }
    fn param_dim(&self) -> usize {
        1
    }
    fn out_dim(&self) -> usize {
        2
    }
    fn eval(&self, theta: &[T], mu: &mut [T], jac: &mut [T], hess: &mut [T], third: &mut [T]) {
        let t = theta[0];
        let two = T::lit(2.0);
        mu.copy_from_slice(&[t, t * t]);
        jac.copy_from_slice(&[T::one(), two * t]);
        hess.copy_from_slice(&[T::zero(), two]);
        third.iter_mut().for_each(|v| *v = T::zero());
    }
    fn is_regular(&self, _theta: &[T]) -> bool {
        true
    }
}

/// `μ(θ) = (θ₁, θ₂, ½(θ₁² + θ₂²))`: the paraboloid graph surface.
#[derive(Debug, Clone, Copy, Default)]
pub struct GraphSurfaceMap;

impl<T: Scalar> MeanMap<T> for GraphSurfaceMap {
    fn name(&self) -> String {
        "graph-surface-gaussian".into()
    }
    fn param_dim(&self) -> usize {
        2
    }
    fn out_dim(&self) -> usize {
        3
    }
    fn eval(&self, theta: &[T], mu: &mut [T], jac: &mut [T], hess: &mut [T], third: &mut [T]) {
        let (a, b) = (theta[0], theta[1]);
        let (z, o) = (T::zero(), T::one());
        mu.copy_from_slice(&[a, b, T::lit(0.5) * (a * a + b * b)]);
        jac.copy_from_slice(&[o, z, z, o, a, b]);
        hess.copy_from_slice(&[z, z, z, z, z, z, z, z, o, z, z, o]);
        third.iter_mut().for_each(|v| *v = T::zero());
    }
    fn is_regular(&self, _theta: &[T]) -> bool {
        true
    }
}

/// `μ(θ) = (θ₁ + θ₂, θ₁ + θ₂)`: rank-one Fisher information everywhere.
#[derive(Debug, Clone, Copy, Default)]
pub struct DegenerateSumMap;

impl<T: Scalar> MeanMap<T> for DegenerateSumMap {
    fn name(&self) -> String {
        "degenerate-sum-gaussian".into()
    }
    fn param_dim(&self) -> usize {
        2
    }
    fn out_dim(&self) -> usize {
        2
    }
    fn eval(&self, theta: &[T], mu: &mut [T], jac: &mut [T], hess: &mut [T], third: &mut [T]) {
        let s = theta[0] + theta[1];
        mu.copy_from_slice(&[s, s]);
        jac.iter_mut().for_each(|v| *v = T::one());
        hess.iter_mut().for_each(|v| *v = T::zero());
        third.iter_mut().for_each(|v| *v = T::zero());
    }
    fn is_regular(&self, _theta: &[T]) -> bool {
        false
    }
}
