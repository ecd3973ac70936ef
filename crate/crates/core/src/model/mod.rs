//! Parametric models with analytic score tensors up to third order.

mod catalog;
mod check;
mod curved_gaussian;
mod discrete;
mod location;
mod reparam;

pub use catalog::{build_model, Builtin, ModelSpec};
pub use check::{check_derivatives, DerivativeCheck, DERIVATIVE_FAILURE_TOL};
pub use curved_gaussian::{
    CurvedGaussian, DegenerateSumMap, EfronMap, GraphSurfaceMap, IdentityMap, MeanMap,
};
pub use discrete::{Bernoulli, Poisson};
pub use location::CauchyLocation;
pub use reparam::QuadraticReparam;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpaceKind {
    RealLine,
    NonnegIntegers,
    /// Outcomes `0, 1, …, size-1`.
    FiniteSet(usize),
    RealVector(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightHint {
    Gaussian,
    HeavyTailed,
    Discrete,
}

/// Sample space plus a hint on which quadrature rule suits it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSpace {
    kind: SpaceKind,
    weight_hint: WeightHint,
}

impl SampleSpace {
    pub fn new(kind: SpaceKind, weight_hint: WeightHint) -> Result<Self> {
        let discrete_kind = matches!(kind, SpaceKind::FiniteSet(_) | SpaceKind::NonnegIntegers);
        if discrete_kind != (weight_hint == WeightHint::Discrete) {
            return Err(Error::InvalidInput(format!(
                "weight hint {weight_hint:?} inconsistent with {kind:?}"
            )));
        }
        if matches!(kind, SpaceKind::FiniteSet(0) | SpaceKind::RealVector(0)) {
            return Err(Error::InvalidInput("empty sample space".into()));
        }
        Ok(Self { kind, weight_hint })
    }

    pub fn kind(&self) -> &SpaceKind {
        &self.kind
    }

    pub fn weight_hint(&self) -> WeightHint {
        self.weight_hint
    }

    /// Number of coordinates of one sample point.
    pub fn point_dim(&self) -> usize {
        match self.kind {
            SpaceKind::RealVector(m) => m,
            _ => 1,
        }
    }

    pub fn is_discrete(&self) -> bool {
        self.weight_hint == WeightHint::Discrete
    }
}

impl std::fmt::Display for SampleSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}/{:?}", self.kind, self.weight_hint)
    }
}

/// Score tensors of one observation, stored flat and row-major.
#[derive(Debug, Clone)]
pub struct Scores<T> {
    pub dim: usize,
    /// `s_i = ∂_i log p`
    pub s1: Vec<T>,
    /// `s_ij`
    pub s2: Vec<T>,
    /// `s_ijk`
    pub s3: Vec<T>,
}

impl<T: Scalar> Scores<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            s1: vec![T::zero(); dim],
            s2: vec![T::zero(); dim * dim],
            s3: vec![T::zero(); dim * dim * dim],
        }
    }

    pub fn clear(&mut self) {
        self.s1.iter_mut().for_each(|v| *v = T::zero());
        self.s2.iter_mut().for_each(|v| *v = T::zero());
        self.s3.iter_mut().for_each(|v| *v = T::zero());
    }

    #[inline]
    pub fn s2(&self, i: usize, j: usize) -> T {
        self.s2[i * self.dim + j]
    }

    #[inline]
    pub fn s3(&self, i: usize, j: usize, k: usize) -> T {
        self.s3[(i * self.dim + j) * self.dim + k]
    }

    pub fn add_assign(&mut self, other: &Self, order: usize) {
        self.s1.iter_mut().zip(&other.s1).for_each(|(a, &b)| *a += b);
        if order >= 2 {
            self.s2.iter_mut().zip(&other.s2).for_each(|(a, &b)| *a += b);
        }
        if order >= 3 {
            self.s3.iter_mut().zip(&other.s3).for_each(|(a, &b)| *a += b);
        }
    }

    /// First non-finite entry as `(order, index)`.
    pub fn first_non_finite(&self, order: usize) -> Option<(usize, Vec<usize>)> {
        let d = self.dim;
        if let Some(i) = self.s1.iter().position(|v| !v.is_finite()) {
            return Some((1, vec![i]));
        }
        if order >= 2 {
            if let Some(f) = self.s2.iter().position(|v| !v.is_finite()) {
                return Some((2, vec![f / d, f % d]));
            }
        }
        if order >= 3 {
            if let Some(f) = self.s3.iter().position(|v| !v.is_finite()) {
                return Some((3, vec![f / (d * d), (f / d) % d, f % d]));
            }
        }
        None
    }
}

/// Centre and per-coordinate scale used to place quadrature nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureFrame<T> {
    pub center: Vec<T>,
    pub scale: Vec<T>,
}

/// A dominated parametric family `p(x; θ)` with analytic score tensors.
///
/// Implementations are pure functions of `(x, θ)`.
pub trait ParametricModel<T: Scalar>: Send + Sync {
    fn name(&self) -> String;

    /// Parameter dimension `d`.
    fn dim(&self) -> usize;

    fn space(&self) -> SampleSpace;

    fn log_density(&self, x: &[T], theta: &[T]) -> T;

    /// Fills `out` with score tensors up to `order` (1..=3). Entries above
    /// `order` are left unspecified.
    fn scores(&self, x: &[T], theta: &[T], order: usize, out: &mut Scores<T>);

    /// Draws one point into `out` (length `space().point_dim()`).
    fn sample(&self, theta: &[T], rng: &mut dyn RngCore, out: &mut [T]) -> Result<()>;

    /// Where the Fisher information is positive definite.
    fn in_regular_domain(&self, theta: &[T]) -> bool;

    /// Where `p(·; θ)` is a well-defined density at all.
    fn in_parameter_space(&self, theta: &[T]) -> bool {
        self.in_regular_domain(theta)
    }

    /// Location/scale hint for quadrature on continuous spaces.
    fn quadrature_frame(&self, _theta: &[T]) -> Option<QuadratureFrame<T>> {
        None
    }

    /// Sums score tensors (up to `order`) over a flat batch of points into `acc`.
    fn accumulate_scores(&self, data: &[T], theta: &[T], order: usize, acc: &mut Scores<T>) {
        let m = self.space().point_dim();
        let mut buf = Scores::new(self.dim());
        acc.clear();
        for x in data.chunks(m) {
            self.scores(x, theta, order, &mut buf);
            acc.add_assign(&buf, order);
        }
    }
}

impl<T: Scalar, M: ParametricModel<T> + ?Sized> ParametricModel<T> for Box<M> {
    fn name(&self) -> String {
        (**self).name()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn space(&self) -> SampleSpace {
        (**self).space()
    }
    fn log_density(&self, x: &[T], theta: &[T]) -> T {
        (**self).log_density(x, theta)
    }
    fn scores(&self, x: &[T], theta: &[T], order: usize, out: &mut Scores<T>) {
        (**self).scores(x, theta, order, out)
    }
    fn sample(&self, theta: &[T], rng: &mut dyn RngCore, out: &mut [T]) -> Result<()> {
        (**self).sample(theta, rng, out)
    }
    fn in_regular_domain(&self, theta: &[T]) -> bool {
        (**self).in_regular_domain(theta)
    }
    fn in_parameter_space(&self, theta: &[T]) -> bool {
        (**self).in_parameter_space(theta)
    }
    fn quadrature_frame(&self, theta: &[T]) -> Option<QuadratureFrame<T>> {
        (**self).quadrature_frame(theta)
    }
    fn accumulate_scores(&self, data: &[T], theta: &[T], order: usize, acc: &mut Scores<T>) {
        (**self).accumulate_scores(data, theta, order, acc)
    }
}

pub(crate) fn check_theta<T: Scalar, M: ParametricModel<T> + ?Sized>(
    model: &M,
    theta: &[T],
) -> Result<()> {
    if theta.len() != model.dim() {
        return Err(Error::InvalidInput(format!(
            "theta has length {}, model {} has dimension {}",
            theta.len(),
            model.name(),
            model.dim()
        )));
    }
    Ok(())
}

pub(crate) fn to_f64<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

/// Draws `n` i.i.d. points, returned flat (`n * point_dim` values).
///
/// Deterministic in `(θ, n, stream)`.
pub fn sample_batch<T: Scalar, M: ParametricModel<T> + ?Sized>(
    model: &M,
    theta: &[T],
    n: usize,
    stream: &RngStream,
) -> Result<Vec<T>> {
    check_theta(model, theta)?;
    if n == 0 {
        return Err(Error::InvalidInput("sample size must be at least 1".into()));
    }
    if !model.in_parameter_space(theta) {
        return Err(Error::Domain {
            model: model.name(),
            theta: to_f64(theta),
        });
    }
    let m = model.space().point_dim();
    let mut rng = stream.rng();
    let mut out = vec![T::zero(); n * m];
    for chunk in out.chunks_mut(m) {
        model.sample(theta, &mut rng, chunk)?;
    }
    Ok(out)
}
