//! Expectations of score-tensor products under `p_θ`.
//!
//! An [`ExpectationEngine`] integrates a vector-valued integrand against the
//! model density; [`moment_table`] uses it to build the [`MomentTable`]
//! that every geometric computation consumes.

mod moments;
pub mod quadrature;

pub use moments::{
    bartlett_residuals, moment_table, third_moment_identity_residual, BartlettResiduals, MomentTable,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_theta, to_f64, ParametricModel, SpaceKind, WeightHint};
use crate::rng::RngStream;
use crate::scalar::Scalar;
use quadrature::{adaptive_integrate, gauss_hermite, AdaptiveTol};

/// Default tolerances for the quadrature engines.
pub const DEFAULT_ABS_TOL: f64 = 1e-10;
pub const DEFAULT_REL_TOL: f64 = 1e-8;
pub const DEFAULT_TAIL_TOL: f64 = 1e-12;
pub const DEFAULT_TRUNCATION: f64 = 1e-10;
pub const DEFAULT_HERMITE_ORDER: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum ExpectationEngine {
    /// Tensor-product Gauss–Hermite around the model's quadrature frame.
    GaussHermite { order: usize },
    /// Adaptive Gauss–Kronrod on `x = c + s·tan(u)`, `|u| ≤ π/2 − truncation`.
    AdaptiveGrid { abs_tol: f64, rel_tol: f64, truncation: f64 },
    /// Direct summation until the tail bound drops below `tail_tol`.
    DiscreteSum { tail_tol: f64 },
    MonteCarlo { samples: usize, seed: u64 },
}

impl ExpectationEngine {
    pub fn gauss_hermite() -> Self {
        Self::GaussHermite {
            order: DEFAULT_HERMITE_ORDER,
        }
    }

    pub fn adaptive() -> Self {
        Self::AdaptiveGrid {
            abs_tol: DEFAULT_ABS_TOL,
            rel_tol: DEFAULT_REL_TOL,
            truncation: DEFAULT_TRUNCATION,
        }
    }

    pub fn discrete() -> Self {
        Self::DiscreteSum {
            tail_tol: DEFAULT_TAIL_TOL,
        }
    }

    /// The quadrature engine suited to a model's weight hint.
    pub fn default_for<T: Scalar, M: ParametricModel<T> + ?Sized>(model: &M) -> Self {
        match model.space().weight_hint() {
            WeightHint::Gaussian => Self::gauss_hermite(),
            WeightHint::HeavyTailed => Self::adaptive(),
            WeightHint::Discrete => Self::discrete(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::GaussHermite { order } => format!("gauss-hermite({order})"),
            Self::AdaptiveGrid { .. } => "adaptive-grid".into(),
            Self::DiscreteSum { .. } => "discrete-sum".into(),
            Self::MonteCarlo { samples, .. } => format!("monte-carlo({samples})"),
        }
    }

    pub fn is_quadrature(&self) -> bool {
        !matches!(self, Self::MonteCarlo { .. })
    }

    pub fn check_compatible<T: Scalar, M: ParametricModel<T> + ?Sized>(&self, model: &M) -> Result<()> {
        let space = model.space();
        let ok = match self {
            Self::GaussHermite { order } => *order >= 1 && space.weight_hint() == WeightHint::Gaussian,
            Self::AdaptiveGrid { .. } => matches!(space.kind(), SpaceKind::RealLine | SpaceKind::RealVector(1)),
            Self::DiscreteSum { .. } => space.is_discrete(),
            Self::MonteCarlo { samples, .. } => *samples >= 2,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::EngineMismatch {
                engine: self.label(),
                space: space.to_string(),
            })
        }
    }

    /// `E_θ[f(X)]` for a vector integrand `f(x, out)` writing `len` values.
    /// Returns the values and a nonnegative error estimate for each.
    pub fn expect<T, M, F>(&self, model: &M, theta: &[T], len: usize, mut f: F) -> Result<(Vec<T>, Vec<T>)>
    where
        T: Scalar,
        M: ParametricModel<T> + ?Sized,
        F: FnMut(&[T], &mut [T]) -> Result<()>,
    {
        check_theta(model, theta)?;
        self.check_compatible(model)?;
        if !model.in_parameter_space(theta) {
            return Err(Error::Domain {
                model: model.name(),
                theta: to_f64(theta),
            });
        }
        match *self {
            Self::GaussHermite { order } => {
                let coarse = (order / 2).max(1);
                let (fine, fine_abs) = hermite_sum(model, theta, order, len, &mut f)?;
                let (rough, _) = hermite_sum(model, theta, coarse, len, &mut f)?;
                // worst-case rounding of a sum over every tensor-grid node
                let nodes = T::from_usize_lossy(order.pow(model.space().point_dim() as u32));
                let err = fine
                    .iter()
                    .zip(&rough)
                    .zip(&fine_abs)
                    .map(|((&a, &b), &s)| (a - b).abs() + nodes * T::epsilon() * s)
                    .collect();
                Ok((fine, err))
            }
            Self::AdaptiveGrid {
                abs_tol,
                rel_tol,
                truncation,
            } => adaptive_sum(model, theta, len, abs_tol, rel_tol, truncation, f),
            Self::DiscreteSum { tail_tol } => discrete_sum(model, theta, len, tail_tol, f),
            Self::MonteCarlo { samples, seed } => monte_carlo(model, theta, len, samples, seed, f),
        }
    }
}

fn frame_or_default<T: Scalar, M: ParametricModel<T> + ?Sized>(model: &M, theta: &[T], m: usize) -> (Vec<T>, Vec<T>) {
    match model.quadrature_frame(theta) {
        Some(fr) => (fr.center, fr.scale),
        None => (vec![T::zero(); m], vec![T::one(); m]),
    }
}

fn hermite_sum<T, M, F>(model: &M, theta: &[T], order: usize, len: usize, mut f: F) -> Result<(Vec<T>, Vec<T>)>
where
    T: Scalar,
    M: ParametricModel<T> + ?Sized,
    F: FnMut(&[T], &mut [T]) -> Result<()>,
{
    let m = model.space().point_dim();
    let (center, scale) = frame_or_default(model, theta, m);
    let (z, w) = gauss_hermite(order);
    let z: Vec<T> = z.into_iter().map(T::lit).collect();
    let w: Vec<T> = w.into_iter().map(T::lit).collect();
    let jac: T = scale.iter().copied().fold(T::one(), |a, b| a * b);
    let mut idx = vec![0usize; m];
    let mut x = vec![T::zero(); m];
    let mut buf = vec![T::zero(); len];
    let mut acc = vec![T::zero(); len];
    let mut abs_acc = vec![T::zero(); len];
    let total = order.pow(m as u32);
    let half = T::lit(0.5);
    for _ in 0..total {
        let mut weight = jac;
        let mut zsq = T::zero();
        for a in 0..m {
            let za = z[idx[a]];
            x[a] = center[a] + scale[a] * za;
            weight *= w[idx[a]];
            zsq += za * za;
        }
        // p(x) e^{|z|²/2}, formed in log space to avoid overflow in the tails
        let wp = weight * (model.log_density(&x, theta) + half * zsq).exp();
        if wp != T::zero() {
            f(&x, &mut buf)?;
            for c in 0..len {
                let term = wp * buf[c];
                acc[c] += term;
                abs_acc[c] += term.abs();
            }
        }
        for a in (0..m).rev() {
            idx[a] += 1;
            if idx[a] < order {
                break;
            }
            idx[a] = 0;
        }
    }
    Ok((acc, abs_acc))
}

fn adaptive_sum<T, M, F>(
    model: &M,
    theta: &[T],
    len: usize,
    abs_tol: f64,
    rel_tol: f64,
    truncation: f64,
    mut f: F,
) -> Result<(Vec<T>, Vec<T>)>
where
    T: Scalar,
    M: ParametricModel<T> + ?Sized,
    F: FnMut(&[T], &mut [T]) -> Result<()>,
{
    let (center, scale) = frame_or_default(model, theta, 1);
    let (c, s) = (center[0], scale[0]);
    let edge = T::FRAC_PI_2() - T::lit(truncation);
    let mut failure: Option<Error> = None;
    let mut buf = vec![T::zero(); len];
    let integrand = |u: T, out: &mut [T]| {
        let (sin, cos) = u.sin_cos();
        let x = [c + s * sin / cos];
        let jac = s / (cos * cos);
        let w = (model.log_density(&x, theta)).exp() * jac;
        if failure.is_none() {
            if let Err(e) = f(&x, &mut buf) {
                failure = Some(e);
            }
        }
        for (o, &b) in out.iter_mut().zip(&buf) {
            *o = w * b;
        }
    };
    let tol = AdaptiveTol {
        abs: abs_tol,
        rel: rel_tol,
        max_intervals: 20_000,
    };
    // quarter points split the bulk of the mass from the tails
    let q = T::FRAC_PI_4();
    let result = adaptive_integrate(integrand, -edge, edge, &[-q, T::zero(), q], len, tol);
    if let Some(e) = failure {
        return Err(e);
    }
    result
}

fn discrete_sum<T, M, F>(model: &M, theta: &[T], len: usize, tail_tol: f64, mut f: F) -> Result<(Vec<T>, Vec<T>)>
where
    T: Scalar,
    M: ParametricModel<T> + ?Sized,
    F: FnMut(&[T], &mut [T]) -> Result<()>,
{
    const MAX_TERMS: usize = 10_000_000;
    let mut acc = vec![T::zero(); len];
    let mut abs_acc = vec![T::zero(); len];
    let mut buf = vec![T::zero(); len];
    let tol = T::lit(tail_tol);
    let limit = match model.space().kind() {
        SpaceKind::FiniteSet(n) => Some(*n),
        _ => None,
    };
    let mut prev_p = T::zero();
    let mut prev_mag = T::zero();
    let mut tail = T::zero();
    let mut k = 0usize;
    loop {
        if limit.is_some_and(|n| k >= n) {
            break;
        }
        if k >= MAX_TERMS {
            return Err(Error::Expectation(format!(
                "discrete sum did not reach tail tolerance within {MAX_TERMS} terms"
            )));
        }
        let x = [T::from_usize_lossy(k)];
        let p = model.log_density(&x, theta).exp();
        let mut mag = T::zero();
        if p != T::zero() {
            f(&x, &mut buf)?;
            for c in 0..len {
                let term = p * buf[c];
                acc[c] += term;
                abs_acc[c] += term.abs();
                mag = mag.max(term.abs());
            }
        }
        if limit.is_none() && k > 0 && p < prev_p && p > T::zero() {
            // Geometric tail bounds on both the mass and the integrand terms.
            let r = p / prev_p;
            let rho = if prev_mag > T::zero() { mag / prev_mag } else { T::zero() };
            if r < T::one() && rho < T::one() {
                let mass_tail = p * r / (T::one() - r);
                let term_tail = mag * rho / (T::one() - rho);
                if mass_tail < tol && term_tail < tol {
                    tail = term_tail.max(mass_tail);
                    break;
                }
            }
        }
        if limit.is_none() && k > 0 && p == T::zero() && prev_p == T::zero() {
            break;
        }
        prev_p = p;
        prev_mag = mag;
        k += 1;
    }
    let err = abs_acc
        .iter()
        .map(|&s| tail + T::lit(16.0) * T::epsilon() * s)
        .collect();
    Ok((acc, err))
}

fn monte_carlo<T, M, F>(model: &M, theta: &[T], len: usize, samples: usize, seed: u64, mut f: F) -> Result<(Vec<T>, Vec<T>)>
where
    T: Scalar,
    M: ParametricModel<T> + ?Sized,
    F: FnMut(&[T], &mut [T]) -> Result<()>,
{
    let m = model.space().point_dim();
    let mut rng = RngStream::new(seed).rng();
    let mut x = vec![T::zero(); m];
    let mut buf = vec![T::zero(); len];
    // Welford accumulation per component
    let mut mean = vec![T::zero(); len];
    let mut m2 = vec![T::zero(); len];
    for t in 0..samples {
        model.sample(theta, &mut rng, &mut x)?;
        f(&x, &mut buf)?;
        let n = T::from_usize_lossy(t + 1);
        for c in 0..len {
            let delta = buf[c] - mean[c];
            mean[c] += delta / n;
            m2[c] += delta * (buf[c] - mean[c]);
        }
    }
    let n = T::from_usize_lossy(samples);
    let se = m2
        .iter()
        .map(|&v| (v / (n - T::one()) / n).sqrt())
        .collect();
    Ok((mean, se))
}
