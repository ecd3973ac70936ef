use rand::RngCore;

use super::{ParametricModel, QuadratureFrame, SampleSpace, Scores};
use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// A model re-expressed in new coordinates `u` through the quadratic map
/// `θ = φ(u) = θ₀ + B(u − u₀) + ½ C[u − u₀, u − u₀]`.
///
/// Scores follow from the chain rule with `J = ∂θ/∂u = B + C(u − u₀)`:
/// `s'_a = J^i_a s_i`, `s'_ab = J^i_a J^j_b s_ij + C^i_ab s_i`, and
/// `s'_abc = JJJ s₃ + (C^i_ab J^j_c + C^i_ac J^j_b + C^i_bc J^j_a) s_ij`.
#[derive(Debug, Clone)]
pub struct QuadraticReparam<T: Scalar, M> {
    base: M,
    theta0: Vec<T>,
    u0: Vec<T>,
    linear: Tensor<T>,
    quadratic: Tensor<T>,
}

impl<T: Scalar, M: ParametricModel<T>> QuadraticReparam<T, M> {
    /// `linear` is `B^i_a` (rank 2, indexed `(i, a)`), `quadratic` is `C^i_ab`
    /// (rank 3, indexed `(i, a, b)`, symmetric in `a, b`).
    pub fn new(base: M, theta0: Vec<T>, u0: Vec<T>, linear: Tensor<T>, quadratic: Tensor<T>) -> Result<Self> {
        let d = base.dim();
        if theta0.len() != d || u0.len() != d || linear.dim() != d || quadratic.dim() != d {
            return Err(Error::InvalidInput("reparameterization dimension mismatch".into()));
        }
        if linear.rank() != 2 || quadratic.rank() != 3 {
            return Err(Error::InvalidInput("reparameterization tensor ranks must be 2 and 3".into()));
        }
        linalg::inverse(&linear)?;
        let quadratic = quadratic.symmetrize_over(&[&[0, 1, 2], &[0, 2, 1]]);
        Ok(Self {
            base,
            theta0,
            u0,
            linear,
            quadratic,
        })
    }

    pub fn base(&self) -> &M {
        &self.base
    }

    pub fn u0(&self) -> &[T] {
        &self.u0
    }

    /// `θ = φ(u)`.
    pub fn map(&self, u: &[T]) -> Vec<T> {
        let d = self.theta0.len();
        let delta: Vec<T> = u.iter().zip(&self.u0).map(|(&a, &b)| a - b).collect();
        (0..d)
            .map(|i| {
                let mut v = self.theta0[i];
                for a in 0..d {
                    v += self.linear.at2(i, a) * delta[a];
                    for b in 0..d {
                        v += T::lit(0.5) * self.quadratic.at3(i, a, b) * delta[a] * delta[b];
                    }
                }
                v
            })
            .collect()
    }

    /// `J^i_a = ∂θ^i/∂u^a` at `u`.
    pub fn jacobian(&self, u: &[T]) -> Tensor<T> {
        let d = self.theta0.len();
        let delta: Vec<T> = u.iter().zip(&self.u0).map(|(&a, &b)| a - b).collect();
        Tensor::from_fn(d, 2, |ix| {
            let (i, a) = (ix[0], ix[1]);
            self.linear.at2(i, a) + (0..d).map(|b| self.quadratic.at3(i, a, b) * delta[b]).sum::<T>()
        })
    }
}

impl<T: Scalar, M: ParametricModel<T>> ParametricModel<T> for QuadraticReparam<T, M> {
    fn name(&self) -> String {
        format!("reparam({})", self.base.name())
    }

    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn space(&self) -> SampleSpace {
        self.base.space()
    }

    fn log_density(&self, x: &[T], u: &[T]) -> T {
        self.base.log_density(x, &self.map(u))
    }

    fn scores(&self, x: &[T], u: &[T], order: usize, out: &mut Scores<T>) {
        let d = self.dim();
        let theta = self.map(u);
        let jac = self.jacobian(u);
        let mut base = Scores::new(d);
        self.base.scores(x, &theta, order, &mut base);
        let c = &self.quadratic;
        for a in 0..d {
            out.s1[a] = (0..d).map(|i| jac.at2(i, a) * base.s1[i]).sum();
        }
        if order >= 2 {
            for a in 0..d {
                for b in 0..d {
                    let mut v = T::zero();
                    for i in 0..d {
                        v += c.at3(i, a, b) * base.s1[i];
                        for j in 0..d {
                            v += jac.at2(i, a) * jac.at2(j, b) * base.s2(i, j);
                        }
                    }
                    out.s2[a * d + b] = v;
                }
            }
        }
        if order >= 3 {
            for a in 0..d {
                for b in 0..d {
                    for e in 0..d {
                        let mut v = T::zero();
                        for i in 0..d {
                            for j in 0..d {
                                let mixed = c.at3(i, a, b) * jac.at2(j, e)
                                    + c.at3(i, a, e) * jac.at2(j, b)
                                    + c.at3(i, b, e) * jac.at2(j, a);
                                v += mixed * base.s2(i, j);
                                for k in 0..d {
                                    v += jac.at2(i, a) * jac.at2(j, b) * jac.at2(k, e) * base.s3(i, j, k);
                                }
                            }
                        }
                        out.s3[(a * d + b) * d + e] = v;
                    }
                }
            }
        }
    }

    fn sample(&self, u: &[T], rng: &mut dyn RngCore, out: &mut [T]) -> Result<()> {
        self.base.sample(&self.map(u), rng, out)
    }

    fn in_regular_domain(&self, u: &[T]) -> bool {
        self.base.in_regular_domain(&self.map(u)) && linalg::inverse(&self.jacobian(u)).is_ok()
    }

    fn in_parameter_space(&self, u: &[T]) -> bool {
        self.base.in_parameter_space(&self.map(u))
    }

    fn quadrature_frame(&self, u: &[T]) -> Option<QuadratureFrame<T>> {
        self.base.quadrature_frame(&self.map(u))
    }
}
