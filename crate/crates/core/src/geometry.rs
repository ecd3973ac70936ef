//! Intrinsic Fisher–Rao geometry: metric, Levi-Civita connection, Riemann
//! tensor and its Ricci-type contraction.
//!
//! Conventions:
//! * `christoffel` holds `Γ^k_ij` at index `(k, i, j)`;
//! * `christoffel_lowered` holds `Γ_ijk = g_kl Γ^l_ij` at `(i, j, k)`;
//! * `R^m_jkl = ∂_k Γ^m_lj − ∂_l Γ^m_kj + Γ^m_kr Γ^r_lj − Γ^m_lr Γ^r_kj`,
//!   `R_ijkl = g_im R^m_jkl`, `R♯_ij = g^kl R_ikjl`.
//!
//! With these signs a round sphere has `R_1212 > 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expectation::{moment_table, ExpectationEngine, MomentTable};
use crate::linalg;
use crate::model::{to_f64, ParametricModel};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Relative eigenvalue floor below which the metric counts as singular.
pub const PD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Metric<T> {
    pub g: Tensor<T>,
    pub g_inv: Tensor<T>,
    /// Ascending.
    pub eigenvalues: Vec<T>,
    pub min_eig: T,
}

/// Validates positive definiteness of `table.g` and inverts it.
pub fn metric<T: Scalar>(table: &MomentTable<T>) -> Result<Metric<T>> {
    let g = table.g.clone();
    let eigenvalues = linalg::sym_eigenvalues(&g);
    let min_eig = eigenvalues[0];
    let max_eig = *eigenvalues.last().expect("non-empty");
    if !(min_eig > T::lit(PD_TOL) * max_eig.abs()) || !min_eig.is_finite() {
        return Err(Error::SingularFisher {
            min_eig: min_eig.as_f64(),
        });
    }
    let g_inv = linalg::inverse(&g)?.symmetrize_full();
    Ok(Metric {
        g,
        g_inv,
        eigenvalues,
        min_eig,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Christoffel<T> {
    /// `Γ^k_ij` at `(k, i, j)`.
    pub second_kind: Tensor<T>,
    /// `Γ_ijk` at `(i, j, k)`, lowered index last.
    pub first_kind: Tensor<T>,
}

/// Levi-Civita symbols from moments alone: with
/// `∂_k g_ij = Ge_ikj + Ge_jki + T_ijk` the first-kind symbols reduce to
/// `Γ_ijk = Ge_ijk + ½T_ijk`.
pub fn christoffel_from_table<T: Scalar>(table: &MomentTable<T>, metric: &Metric<T>) -> Christoffel<T> {
    let d = table.dim();
    let dg = table.metric_derivative();
    let half = T::lit(0.5);
    let first_kind = Tensor::from_fn(d, 3, |ix| {
        let (i, j, k) = (ix[0], ix[1], ix[2]);
        half * (dg.at3(i, j, k) + dg.at3(j, i, k) - dg.at3(k, i, j))
    })
    .symmetrize_over(&[&[0, 1, 2], &[1, 0, 2]]);
    let second_kind = Tensor::from_fn(d, 3, |ix| {
        let (k, i, j) = (ix[0], ix[1], ix[2]);
        (0..d).map(|l| metric.g_inv.at2(k, l) * first_kind.at3(i, j, l)).sum()
    });
    Christoffel {
        second_kind,
        first_kind,
    }
}

/// Computes the moment table at `theta` and the Christoffel symbols from it.
pub fn christoffel<T: Scalar, M: ParametricModel<T> + ?Sized>(
    model: &M,
    theta: &[T],
    engine: &ExpectationEngine,
) -> Result<Christoffel<T>> {
    let table = moment_table(model, theta, engine)?;
    let metric = metric(&table)?;
    Ok(christoffel_from_table(&table, &metric))
}

/// Step policy for differentiating the connection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdPolicy {
    /// Base step is `scale · max(1, ‖θ‖) · ε^{1/3}`.
    pub scale: f64,
    /// Combine steps `h` and `h/2` by one Richardson level.
    pub richardson: bool,
}

impl Default for FdPolicy {
    fn default() -> Self {
        Self {
            scale: 1.0,
            richardson: true,
        }
    }
}

impl FdPolicy {
    pub fn step<T: Scalar>(&self, theta: &[T]) -> T {
        let norm = theta.iter().map(|&x| x * x).sum::<T>().sqrt();
        T::lit(self.scale) * norm.max(T::one()) * T::epsilon().cbrt()
    }
}

/// `∂_k Γ^m_ij` at `(k, m, i, j)` by central differences.
fn christoffel_derivative<T: Scalar, M: ParametricModel<T> + ?Sized>(
    model: &M,
    theta: &[T],
    engine: &ExpectationEngine,
    fd: FdPolicy,
) -> Result<Tensor<T>> {
    let d = theta.len();
    let h = fd.step(theta);
    let central = |k: usize, step: T| -> Result<Tensor<T>> {
        let mut plus = theta.to_vec();
        let mut minus = theta.to_vec();
        plus[k] += step;
        minus[k] -= step;
        for p in [&plus, &minus] {
            if !model.in_regular_domain(p) {
                return Err(Error::Domain {
                    model: model.name(),
                    theta: to_f64(p),
                });
            }
        }
        let gp = christoffel(model, &plus, engine)?.second_kind;
        let gm = christoffel(model, &minus, engine)?.second_kind;
        Ok(gp.sub(&gm).scale(T::one() / (T::lit(2.0) * step)))
    };
    let mut out = Tensor::zeros(d, 4);
    for k in 0..d {
        let coarse = central(k, h)?;
        let deriv = if fd.richardson {
            let fine = central(k, h * T::lit(0.5))?;
            fine.scale(T::lit(4.0)).sub(&coarse).scale(T::one() / T::lit(3.0))
        } else {
            coarse
        };
        let width = d * d * d;
        out.data_mut()[k * width..(k + 1) * width].copy_from_slice(deriv.data());
    }
    Ok(out)
}

/// Assembles `R_ijkl` from `Γ`, `∂Γ` and `g`. Antisymmetry in `(k, l)` is
/// exact: only `k < l` is evaluated and the rest is filled by negation.
pub fn riemann_from_connection<T: Scalar>(g: &Tensor<T>, gamma: &Tensor<T>, dgamma: &Tensor<T>) -> Tensor<T> {
    let d = g.dim();
    let mut upper = Tensor::zeros(d, 4); // R^m_jkl at (m, j, k, l)
    for m in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in (k + 1)..d {
                    let deriv = dgamma.at4(k, m, l, j) - dgamma.at4(l, m, k, j);
                    let quad: T = (0..d)
                        .map(|r| gamma.at3(m, k, r) * gamma.at3(r, l, j) - gamma.at3(m, l, r) * gamma.at3(r, k, j))
                        .sum();
                    let v = deriv + quad;
                    *upper.at4_mut(m, j, k, l) = v;
                    *upper.at4_mut(m, j, l, k) = -v;
                }
            }
        }
    }
    let mut lowered = Tensor::zeros(d, 4);
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in (k + 1)..d {
                    let v: T = (0..d).map(|m| g.at2(i, m) * upper.at4(m, j, k, l)).sum();
                    *lowered.at4_mut(i, j, k, l) = v;
                    *lowered.at4_mut(i, j, l, k) = -v;
                }
            }
        }
    }
    lowered
}

/// `R♯_ij = g^kl R_ikjl`.
pub fn ricci_contraction<T: Scalar>(riemann: &Tensor<T>, g_inv: &Tensor<T>) -> Tensor<T> {
    let d = g_inv.dim();
    Tensor::from_fn(d, 2, |ix| {
        let (i, j) = (ix[0], ix[1]);
        let mut acc = T::zero();
        for k in 0..d {
            for l in 0..d {
                acc += g_inv.at2(k, l) * riemann.at4(i, k, j, l);
            }
        }
        acc
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CurvatureChecks<T> {
    /// `max |R_ijkl + R_ijlk|`
    pub antisym_last: T,
    /// `max |R_ijkl + R_jikl|`
    pub antisym_first: T,
    /// `max |R_ijkl − R_klij|`
    pub pair_symmetry: T,
    /// `max |R_ijkl + R_iklj + R_iljk|`
    pub bianchi: T,
    /// `max |R♯_ij − R♯_ji|`
    pub rsharp_symmetry: T,
    /// `max |g⁻¹g − I|`
    pub inverse_residual: T,
}

impl<T: Scalar> CurvatureChecks<T> {
    pub fn worst(&self) -> T {
        [
            self.antisym_last,
            self.antisym_first,
            self.pair_symmetry,
            self.bianchi,
            self.rsharp_symmetry,
        ]
        .into_iter()
        .fold(T::zero(), T::max)
    }
}

pub fn curvature_checks<T: Scalar>(riemann: &Tensor<T>, rsharp: &Tensor<T>, metric: &Metric<T>) -> CurvatureChecks<T> {
    let d = riemann.dim();
    let mut c = CurvatureChecks {
        antisym_last: T::zero(),
        antisym_first: T::zero(),
        pair_symmetry: T::zero(),
        bianchi: T::zero(),
        rsharp_symmetry: rsharp.asymmetry(&[1, 0]),
        inverse_residual: linalg::matmul(&metric.g_inv, &metric.g).max_abs_diff(&Tensor::identity(d)),
    };
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    let r = riemann.at4(i, j, k, l);
                    c.antisym_last = c.antisym_last.max((r + riemann.at4(i, j, l, k)).abs());
                    c.antisym_first = c.antisym_first.max((r + riemann.at4(j, i, k, l)).abs());
                    c.pair_symmetry = c.pair_symmetry.max((r - riemann.at4(k, l, i, j)).abs());
                    c.bianchi = c
                        .bianchi
                        .max((r + riemann.at4(i, k, l, j) + riemann.at4(i, l, j, k)).abs());
                }
            }
        }
    }
    c
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Curvature<T> {
    pub riemann: Tensor<T>,
    pub rsharp: Tensor<T>,
}

/// Riemann tensor and `R♯` at `theta`, differentiating the moment-based
/// connection by central differences (plus Richardson extrapolation).
pub fn riemann<T: Scalar, M: ParametricModel<T> + ?Sized>(
    model: &M,
    theta: &[T],
    engine: &ExpectationEngine,
    fd: FdPolicy,
) -> Result<Curvature<T>> {
    let table = moment_table(model, theta, engine)?;
    let metric = metric(&table)?;
    let gamma = christoffel_from_table(&table, &metric);
    let dgamma = christoffel_derivative(model, theta, engine, fd)?;
    let riemann = riemann_from_connection(&metric.g, &gamma.second_kind, &dgamma);
    let rsharp = ricci_contraction(&riemann, &metric.g_inv);
    Ok(Curvature { riemann, rsharp })
}

/// Everything intrinsic at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GeometrySnapshot<T> {
    pub theta: Vec<T>,
    pub g: Tensor<T>,
    pub g_inv: Tensor<T>,
    /// `∂_k g_ij` at `(k, i, j)`.
    pub dg: Tensor<T>,
    pub christoffel: Tensor<T>,
    pub christoffel_lowered: Tensor<T>,
    pub riemann: Tensor<T>,
    pub rsharp: Tensor<T>,
    pub min_eig_g: T,
    pub checks: CurvatureChecks<T>,
}

impl<T: Scalar> GeometrySnapshot<T> {
    pub fn dim(&self) -> usize {
        self.g.dim()
    }

    pub fn metric(&self) -> Metric<T> {
        Metric {
            g: self.g.clone(),
            g_inv: self.g_inv.clone(),
            eigenvalues: linalg::sym_eigenvalues(&self.g),
            min_eig: self.min_eig_g,
        }
    }
}

/// Builds a snapshot from an existing table (so callers can share it with the
/// immersion and correction steps).
pub fn geometry_snapshot_from_table<T: Scalar, M: ParametricModel<T> + ?Sized>(
    model: &M,
    table: &MomentTable<T>,
    engine: &ExpectationEngine,
    fd: FdPolicy,
) -> Result<GeometrySnapshot<T>> {
    let metric = metric(table)?;
    let gamma = christoffel_from_table(table, &metric);
    let dgamma = christoffel_derivative(model, &table.theta, engine, fd)?;
    let riemann = riemann_from_connection(&metric.g, &gamma.second_kind, &dgamma);
    let rsharp = ricci_contraction(&riemann, &metric.g_inv);
    let checks = curvature_checks(&riemann, &rsharp, &metric);
    Ok(GeometrySnapshot {
        theta: table.theta.clone(),
        g: metric.g,
        g_inv: metric.g_inv,
        dg: table.metric_derivative(),
        christoffel: gamma.second_kind,
        christoffel_lowered: gamma.first_kind,
        riemann,
        rsharp,
        min_eig_g: metric.min_eig,
        checks,
    })
}

pub fn geometry_snapshot<T: Scalar, M: ParametricModel<T> + ?Sized>(
    model: &M,
    theta: &[T],
    engine: &ExpectationEngine,
    fd: FdPolicy,
) -> Result<GeometrySnapshot<T>> {
    let table = moment_table(model, theta, engine)?;
    geometry_snapshot_from_table(model, &table, engine, fd)
}

/// `(∇²ℓ)_ij = U2_ij − Γ^k_ij U1_k`.
pub fn covariant_hessian<T: Scalar>(u2: &Tensor<T>, u1: &[T], gamma: &Tensor<T>) -> Result<Tensor<T>> {
    let d = u2.dim();
    if u1.len() != d || gamma.dim() != d || gamma.rank() != 3 || u2.rank() != 2 {
        return Err(Error::InvalidInput("covariant Hessian shape mismatch".into()));
    }
    Ok(Tensor::from_fn(d, 2, |ix| {
        let (i, j) = (ix[0], ix[1]);
        u2.at2(i, j) - (0..d).map(|k| gamma.at3(k, i, j) * u1[k]).sum::<T>()
    }))
}
