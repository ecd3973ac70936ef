//! Second-order covariance correction `P = ½R♯ + S♯ + D`.
//!
//! `P` is evaluated in a normal chart `θ(u) = θ₀ + Au + ½Hq[u,u]` where the
//! metric is the identity and the Christoffel symbols vanish at `u = 0`. The
//! chart-coordinate score moments are exact linear combinations of the base
//! ones, so nothing is re-integrated. The result is carried back to the
//! user chart as a `(0,2)`-tensor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expectation::{moment_table, ExpectationEngine, MomentTable};
use crate::geometry::{geometry_snapshot_from_table, metric, FdPolicy, GeometrySnapshot};
use crate::immersion::{immersion_report_with, ImmersionReport};
use crate::linalg;
use crate::model::ParametricModel;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Hypothesis tolerance for the reduced formula.
pub const TANGENCY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct NormalChart<T> {
    pub theta0: Vec<T>,
    /// `A^i_a` at `(i, a)`.
    pub a: Tensor<T>,
    /// `Hq^i_ab` at `(i, a, b)`.
    pub hq: Tensor<T>,
}

impl<T: Scalar> NormalChart<T> {
    pub fn dim(&self) -> usize {
        self.theta0.len()
    }

    /// Chart with a prescribed linear part; `Hq^i_ab = −Γ^i_jk A^j_a A^k_b`.
    pub fn from_linear(theta0: Vec<T>, a: Tensor<T>, christoffel: &Tensor<T>) -> Self {
        let d = theta0.len();
        let hq = Tensor::from_fn(d, 3, |ix| {
            let (i, p, q) = (ix[0], ix[1], ix[2]);
            let mut acc = T::zero();
            for j in 0..d {
                for k in 0..d {
                    acc += christoffel.at3(i, j, k) * a.at2(j, p) * a.at2(k, q);
                }
            }
            -acc
        });
        Self { theta0, a, hq }
    }

    pub fn map(&self, u: &[T]) -> Vec<T> {
        let d = self.dim();
        (0..d)
            .map(|i| {
                let mut v = self.theta0[i];
                for p in 0..d {
                    v += self.a.at2(i, p) * u[p];
                    for q in 0..d {
                        v += T::lit(0.5) * self.hq.at3(i, p, q) * u[p] * u[q];
                    }
                }
                v
            })
            .collect()
    }

    /// `∂θ^i/∂u^a` at `(i, a)`.
    pub fn jacobian(&self, u: &[T]) -> Tensor<T> {
        let d = self.dim();
        Tensor::from_fn(d, 2, |ix| {
            let (i, p) = (ix[0], ix[1]);
            self.a.at2(i, p) + (0..d).map(|q| self.hq.at3(i, p, q) * u[q]).sum::<T>()
        })
    }
}

/// Normal chart with `A = g^{-1/2}`.
pub fn build_normal_chart<T: Scalar>(snapshot: &GeometrySnapshot<T>) -> Result<NormalChart<T>> {
    let eig = linalg::sym_eigen(&snapshot.g);
    let max = eig.values.last().copied().unwrap_or(T::zero());
    if !(eig.values[0] > T::lit(crate::geometry::PD_TOL) * max.abs()) {
        return Err(Error::SingularFisher {
            min_eig: eig.values[0].as_f64(),
        });
    }
    let a = linalg::sym_apply(&eig, |v| T::one() / v.sqrt()).symmetrize_full();
    Ok(NormalChart::from_linear(snapshot.theta.clone(), a, &snapshot.christoffel))
}

/// `out[.., a, ..] = Σ_i t[.., i, ..] A^i_a` on every axis.
fn transform_all<T: Scalar>(t: &Tensor<T>, a: &Tensor<T>) -> Tensor<T> {
    let mut cur = t.clone();
    for axis in 0..t.rank() {
        cur = transform_axis(&cur, axis, a);
    }
    cur
}

fn transform_axis<T: Scalar>(t: &Tensor<T>, axis: usize, a: &Tensor<T>) -> Tensor<T> {
    let d = t.dim();
    let mut idx = vec![0usize; t.rank()];
    Tensor::from_fn(d, t.rank(), |ix| {
        idx.copy_from_slice(ix);
        let mut acc = T::zero();
        for i in 0..d {
            idx[axis] = i;
            acc += t.get(&idx) * a.at2(i, ix[axis]);
        }
        acc
    })
}

/// Score moments in chart coordinates at `u = 0`, using
/// `s'_a = A s`, `s'_ab = AA s₂ + Hq s₁` and
/// `s'_abc = AAA s₃ + (Hq A over the three pair-splits) s₂`.
pub fn pushforward_moments<T: Scalar>(table: &MomentTable<T>, chart: &NormalChart<T>) -> MomentTable<T> {
    let d = table.dim();
    let a = &chart.a;
    let h = &chart.hq;

    // (Hq A)-contractions with a base tensor: X_abk = Hq^i_ab A^j_k base_ij
    let ha = |base: &Tensor<T>| {
        Tensor::from_fn(d, 3, |ix| {
            let (p, q, c) = (ix[0], ix[1], ix[2]);
            let mut acc = T::zero();
            for i in 0..d {
                for j in 0..d {
                    acc += h.at3(i, p, q) * a.at2(j, c) * base.at2(i, j);
                }
            }
            acc
        })
    };

    let g = transform_all(&table.g, a);
    let t = transform_all(&table.t, a);
    let f = transform_all(&table.f, a);
    let score_mean = transform_all(&table.score_mean, a);

    let hg = ha(&table.g);
    let ge = transform_all(&table.ge, a).add(&hg);

    let hh = ha(&table.hessian_mean);
    let kappa = Tensor::from_fn(d, 3, |ix| {
        let (p, q, r) = (ix[0], ix[1], ix[2]);
        hh.at3(p, q, r) + hh.at3(p, r, q) + hh.at3(q, r, p)
    })
    .add(&transform_all(&table.kappa, a));

    let hessian_mean = Tensor::from_fn(d, 2, |ix| {
        (0..d).map(|i| h.at3(i, ix[0], ix[1]) * table.score_mean.at1(i)).sum::<T>()
    })
    .add(&transform_all(&table.hessian_mean, a));

    // Ge with its first two slots transformed: AAGe_abk = A^i_a A^j_b Ge_ijk
    let aage = transform_axis(&transform_axis(&table.ge, 0, a), 1, a);
    // Hq-contracted metric and T: HG_abk = Hq^i_ab g_ik, HT_abkl = Hq^i_ab T_ikl
    let hmetric = Tensor::from_fn(d, 3, |ix| {
        (0..d).map(|i| h.at3(i, ix[0], ix[1]) * table.g.at2(i, ix[2])).sum::<T>()
    });
    let ht = Tensor::from_fn(d, 4, |ix| {
        (0..d).map(|i| h.at3(i, ix[0], ix[1]) * table.t.at3(i, ix[2], ix[3])).sum::<T>()
    });
    let ht = transform_axis(&transform_axis(&ht, 2, a), 3, a);

    let q_lin = transform_all(&table.q, a);
    let q = Tensor::from_fn(d, 4, |ix| {
        let (p, qq, r, s) = (ix[0], ix[1], ix[2], ix[3]);
        let mut acc = q_lin.at4(p, qq, r, s);
        for k in 0..d {
            acc += aage.at3(p, qq, k) * h.at3(k, r, s);
            acc += h.at3(k, p, qq) * aage.at3(r, s, k);
            acc += hmetric.at3(p, qq, k) * h.at3(k, r, s);
        }
        acc
    });
    let m = transform_all(&table.m, a).add(&ht);

    let scale = (a.max_abs() + h.max_abs()).max(T::one());
    MomentTable {
        theta: vec![T::zero(); d],
        g,
        t,
        ge,
        kappa,
        q,
        m,
        f,
        score_mean,
        hessian_mean,
        err: table.err * scale.powi(4),
    }
    .symmetrized()
}

fn raise_last<T: Scalar>(t: &Tensor<T>, g_inv: &Tensor<T>) -> Tensor<T> {
    let d = t.dim();
    Tensor::from_fn(d, 3, |ix| {
        (0..d).map(|n| g_inv.at2(ix[2], n) * t.at3(ix[0], ix[1], n)).sum()
    })
}

/// The general normal-chart expression for `P`, with indices raised by the
/// table's own metric.
pub fn p_tensor_full<T: Scalar>(m: &MomentTable<T>) -> Result<Tensor<T>> {
    let d = m.dim();
    let gi = linalg::inverse(&m.g)?.symmetrize_full();
    // Ge^m_ik at (i, k, m)
    let ge_up = raise_last(&m.ge, &gi);
    let half = T::lit(0.5);
    let quarter = T::lit(0.25);
    let p = Tensor::from_fn(d, 2, |ix| {
        let (i, j) = (ix[0], ix[1]);
        let mut acc = T::zero();
        for k in 0..d {
            for mm in 0..d {
                acc += gi.at2(k, mm) * (m.q.at4(i, k, j, mm) - m.g.at2(i, k) * m.g.at2(j, mm));
                acc += ge_up.at3(i, k, mm) * ge_up.at3(j, mm, k);
                acc += ge_up.at3(i, k, k) * ge_up.at3(j, mm, mm);
            }
        }
        for k in 0..d {
            for l in 0..d {
                for r in 0..d {
                    for s in 0..d {
                        let w = gi.at2(k, l) * gi.at2(r, s) + gi.at2(k, r) * gi.at2(l, s) + gi.at2(k, s) * gi.at2(l, r);
                        acc += quarter * m.kappa.at3(i, k, l) * m.kappa.at3(j, r, s) * w;
                    }
                }
            }
        }
        for k in 0..d {
            for r in 0..d {
                for s in 0..d {
                    let t5 = ge_up.at3(i, k, k) * gi.at2(r, s)
                        + ge_up.at3(i, k, r) * gi.at2(k, s)
                        + ge_up.at3(i, k, s) * gi.at2(k, r);
                    acc += half * m.kappa.at3(j, r, s) * t5;
                    let t6 = ge_up.at3(j, k, k) * gi.at2(r, s)
                        + ge_up.at3(j, k, r) * gi.at2(k, s)
                        + ge_up.at3(j, k, s) * gi.at2(k, r);
                    acc += half * m.kappa.at3(i, r, s) * t6;
                }
            }
        }
        acc
    });
    Ok(p.symmetrize_full())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TangencyResiduals {
    /// `max |Ge_ijk + ½T_ijk|`
    pub ge: f64,
    /// `max |kappa_ijk − ½T_ijk|`
    pub kappa: f64,
    /// `max |g − I|`
    pub metric: f64,
}

impl TangencyResiduals {
    pub fn worst(&self) -> f64 {
        self.ge.max(self.kappa).max(self.metric)
    }
}

pub fn tangency_residuals<T: Scalar>(m: &MomentTable<T>) -> TangencyResiduals {
    let half = T::lit(0.5);
    TangencyResiduals {
        ge: m.ge.add(&m.t.scale(half)).max_abs().as_f64(),
        kappa: m.kappa.sub(&m.t.scale(half)).max_abs().as_f64(),
        metric: m.g.max_abs_diff(&Tensor::identity(m.dim())).as_f64(),
    }
}

/// `P_ij = Σ_k Q_ikjk − δ_ij − ½κ_ikl κ_jkl + ¼κ_irr κ_jss`, valid once the
/// chart makes the metric the identity and `Ge = −½T`, `κ = ½T`.
pub fn p_tensor_reduced<T: Scalar>(m: &MomentTable<T>) -> Result<Tensor<T>> {
    let res = tangency_residuals(m);
    if !(res.worst() <= TANGENCY_TOL) {
        return Err(Error::TangencyViolation {
            residual: res.worst(),
            tolerance: TANGENCY_TOL,
        });
    }
    let d = m.dim();
    let trace: Vec<T> = (0..d).map(|i| (0..d).map(|r| m.kappa.at3(i, r, r)).sum()).collect();
    let p = Tensor::from_fn(d, 2, |ix| {
        let (i, j) = (ix[0], ix[1]);
        let mut acc = if i == j { -T::one() } else { T::zero() };
        for k in 0..d {
            acc += m.q.at4(i, k, j, k);
            for l in 0..d {
                acc -= T::lit(0.5) * m.kappa.at3(i, k, l) * m.kappa.at3(j, k, l);
            }
        }
        acc + T::lit(0.25) * trace[i] * trace[j]
    });
    Ok(p.symmetrize_full())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Consistency {
    /// `max |P_full − P_reduced|` in the chart.
    pub full_vs_reduced: f64,
    pub tangency: TangencyResiduals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CorrectionReport<T> {
    pub theta0: Vec<T>,
    pub chart: NormalChart<T>,
    pub moments_nc: MomentTable<T>,
    pub p_nc: Tensor<T>,
    pub p_user: Tensor<T>,
    pub rsharp_user: Tensor<T>,
    pub ssharp_user: Tensor<T>,
    /// Defined as `P − ½R♯ − S♯`.
    pub d_user: Tensor<T>,
    /// Fisher information in user coordinates and its inverse.
    pub fisher: Tensor<T>,
    pub fisher_inv: Tensor<T>,
    pub consistency: Consistency,
}

impl<T: Scalar> CorrectionReport<T> {
    /// `I⁻¹/n + I⁻¹ P I⁻¹/n²`.
    pub fn predict_cov(&self, n: usize) -> Result<Tensor<T>> {
        predict_covariance(&self.p_user, &self.fisher_inv, n)
    }

    /// `I⁻¹ P I⁻¹`, the `n⁻²` coefficient.
    pub fn second_order_coefficient(&self) -> Tensor<T> {
        linalg::congruence(&self.p_user, &self.fisher_inv)
    }
}

pub fn predict_covariance<T: Scalar>(p_user: &Tensor<T>, fisher_inv: &Tensor<T>, n: usize) -> Result<Tensor<T>> {
    if n == 0 {
        return Err(Error::InvalidInput("sample size must be at least 1".into()));
    }
    let nf = T::from_usize_lossy(n);
    let second = linalg::congruence(p_user, fisher_inv);
    Ok(fisher_inv
        .scale(T::one() / nf)
        .add(&second.scale(T::one() / (nf * nf)))
        .symmetrize_full())
}

/// `P_user_ij = (A⁻¹)^a_i (A⁻¹)^b_j P_nc_ab` and `D = P − ½R♯ − S♯`.
pub fn decompose<T: Scalar>(
    p_nc: &Tensor<T>,
    chart: &NormalChart<T>,
    rsharp_user: &Tensor<T>,
    ssharp_user: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let a_inv = linalg::inverse(&chart.a)?;
    let p_user = linalg::congruence(p_nc, &a_inv).symmetrize_full();
    let d_user = p_user.sub(&rsharp_user.scale(T::lit(0.5))).sub(ssharp_user);
    Ok((p_user, d_user))
}

/// Builds the chart, pushes the moments forward, evaluates `P` both ways and
/// decomposes it.
pub fn correction_report<T: Scalar>(
    table: &MomentTable<T>,
    snapshot: &GeometrySnapshot<T>,
    immersion: &ImmersionReport<T>,
) -> Result<CorrectionReport<T>> {
    let chart = build_normal_chart(snapshot)?;
    correction_report_in(table, snapshot, immersion, chart)
}

/// As [`correction_report`] with a caller-supplied chart.
pub fn correction_report_in<T: Scalar>(
    table: &MomentTable<T>,
    snapshot: &GeometrySnapshot<T>,
    immersion: &ImmersionReport<T>,
    chart: NormalChart<T>,
) -> Result<CorrectionReport<T>> {
    let moments_nc = pushforward_moments(table, &chart);
    let p_nc = p_tensor_full(&moments_nc)?;
    let p_red = p_tensor_reduced(&moments_nc)?;
    let consistency = Consistency {
        full_vs_reduced: p_nc.max_abs_diff(&p_red).as_f64(),
        tangency: tangency_residuals(&moments_nc),
    };
    let (p_user, d_user) = decompose(&p_nc, &chart, &snapshot.rsharp, &immersion.ssharp)?;
    Ok(CorrectionReport {
        theta0: snapshot.theta.clone(),
        chart,
        moments_nc,
        p_nc,
        p_user,
        rsharp_user: snapshot.rsharp.clone(),
        ssharp_user: immersion.ssharp.clone(),
        d_user,
        fisher: snapshot.g.clone(),
        fisher_inv: snapshot.g_inv.clone(),
        consistency,
    })
}

/// All per-point results of the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Analysis<T> {
    pub moments: MomentTable<T>,
    pub geometry: GeometrySnapshot<T>,
    pub immersion: ImmersionReport<T>,
    pub correction: CorrectionReport<T>,
}

pub fn analyze<T: Scalar, M: ParametricModel<T> + ?Sized>(
    model: &M,
    theta: &[T],
    engine: &ExpectationEngine,
    fd: FdPolicy,
) -> Result<Analysis<T>> {
    engine.check_compatible(model)?;
    let moments = moment_table(model, theta, engine)?;
    let met = metric(&moments)?;
    let geometry = geometry_snapshot_from_table(model, &moments, engine, fd)?;
    let immersion = immersion_report_with(&moments, &met).with_gauss(&geometry.riemann);
    let correction = correction_report(&moments, &geometry, &immersion)?;
    Ok(Analysis {
        moments,
        geometry,
        immersion,
        correction,
    })
}
