use serde::{Deserialize, Serialize};

use super::ExpectationEngine;
use crate::error::{Error, Result};
use crate::model::{to_f64, ParametricModel, Scores};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Every score-moment tensor at one parameter value.
///
/// Index conventions (all expectations under `p_θ`):
/// `g_ij = E[s_i s_j]`, `T_ijk = E[s_i s_j s_k]`, `Ge_ijk = E[s_ij s_k]`,
/// `kappa_ijk = E[s_ijk]`, `Q_ijkl = E[s_ij s_kl]`, `M_ijkl = E[s_ij s_k s_l]`,
/// `F_ijkl = E[s_i s_j s_k s_l]`. `score_mean` and `hessian_mean` hold `E[s_i]`
/// and `E[s_ij]`; they are zero and `−g` for a correctly normalized model but
/// are kept so that chart changes can be carried out without assuming it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MomentTable<T> {
    pub theta: Vec<T>,
    pub g: Tensor<T>,
    pub t: Tensor<T>,
    pub ge: Tensor<T>,
    pub kappa: Tensor<T>,
    pub q: Tensor<T>,
    pub m: Tensor<T>,
    pub f: Tensor<T>,
    pub score_mean: Tensor<T>,
    pub hessian_mean: Tensor<T>,
    /// Largest error estimate over all entries.
    pub err: T,
}

const PAIR_SWAP: &[usize] = &[1, 0];
const SYM_IJ_3: [&[usize]; 2] = [&[0, 1, 2], &[1, 0, 2]];
const SYM_Q: [&[usize]; 8] = [
    &[0, 1, 2, 3],
    &[1, 0, 2, 3],
    &[0, 1, 3, 2],
    &[1, 0, 3, 2],
    &[2, 3, 0, 1],
    &[3, 2, 0, 1],
    &[2, 3, 1, 0],
    &[3, 2, 1, 0],
];
const SYM_M: [&[usize]; 4] = [&[0, 1, 2, 3], &[1, 0, 2, 3], &[0, 1, 3, 2], &[1, 0, 3, 2]];

impl<T: Scalar> MomentTable<T> {
    pub fn dim(&self) -> usize {
        self.g.dim()
    }

    /// Projects every tensor onto its symmetry class.
    pub fn symmetrized(mut self) -> Self {
        self.g = self.g.symmetrize_full();
        self.t = self.t.symmetrize_full();
        self.kappa = self.kappa.symmetrize_full();
        self.f = self.f.symmetrize_full();
        self.ge = self.ge.symmetrize_over(&SYM_IJ_3);
        self.q = self.q.symmetrize_over(&SYM_Q);
        self.m = self.m.symmetrize_over(&SYM_M);
        self.hessian_mean = self.hessian_mean.symmetrize_full();
        self
    }

    /// Largest violation of the declared index symmetries.
    pub fn symmetry_defect(&self) -> T {
        let mut worst = self.g.asymmetry(PAIR_SWAP);
        for t in [&self.t, &self.kappa, &self.f] {
            worst = worst.max(t.full_asymmetry());
        }
        worst = worst.max(self.ge.asymmetry(SYM_IJ_3[1]));
        for p in SYM_Q {
            worst = worst.max(self.q.asymmetry(p));
        }
        for p in SYM_M {
            worst = worst.max(self.m.asymmetry(p));
        }
        worst
    }

    /// `∂_k g_ij = Ge_ikj + Ge_jki + T_ijk`, indexed `(k, i, j)`.
    pub fn metric_derivative(&self) -> Tensor<T> {
        let d = self.dim();
        Tensor::from_fn(d, 3, |ix| {
            let (k, i, j) = (ix[0], ix[1], ix[2]);
            self.ge.at3(i, k, j) + self.ge.at3(j, k, i) + self.t.at3(i, j, k)
        })
    }

    pub fn cast<U: Scalar>(&self) -> MomentTable<U> {
        MomentTable {
            theta: self.theta.iter().map(|x| U::lit(x.as_f64())).collect(),
            g: self.g.cast(),
            t: self.t.cast(),
            ge: self.ge.cast(),
            kappa: self.kappa.cast(),
            q: self.q.cast(),
            m: self.m.cast(),
            f: self.f.cast(),
            score_mean: self.score_mean.cast(),
            hessian_mean: self.hessian_mean.cast(),
            err: U::lit(self.err.as_f64()),
        }
    }
}

struct Layout {
    d: usize,
}

impl Layout {
    fn sizes(&self) -> [usize; 9] {
        let d = self.d;
        [d, d * d, d * d, d.pow(3), d.pow(3), d.pow(3), d.pow(4), d.pow(4), d.pow(4)]
    }

    fn len(&self) -> usize {
        self.sizes().iter().sum()
    }
}

fn fill_products<T: Scalar>(s: &Scores<T>, out: &mut [T]) {
    let d = s.dim;
    let mut o = 0;
    let mut push = |v: T| {
        out[o] = v;
        o += 1;
    };
    for i in 0..d {
        push(s.s1[i]);
    }
    for i in 0..d {
        for j in 0..d {
            push(s.s2(i, j));
        }
    }
    for i in 0..d {
        for j in 0..d {
            push(s.s1[i] * s.s1[j]);
        }
    }
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                push(s.s1[i] * s.s1[j] * s.s1[k]);
            }
        }
    }
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                push(s.s2(i, j) * s.s1[k]);
            }
        }
    }
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                push(s.s3(i, j, k));
            }
        }
    }
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    push(s.s2(i, j) * s.s2(k, l));
                }
            }
        }
    }
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    push(s.s2(i, j) * s.s1[k] * s.s1[l]);
                }
            }
        }
    }
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    push(s.s1[i] * s.s1[j] * s.s1[k] * s.s1[l]);
                }
            }
        }
    }
}

fn score_integrand<'a, T: Scalar, M: ParametricModel<T> + ?Sized>(
    model: &'a M,
    theta: &'a [T],
) -> impl FnMut(&[T], &mut [T]) -> Result<()> + 'a {
    let mut s = Scores::new(model.dim());
    move |x, out| {
        model.scores(x, theta, 3, &mut s);
        if let Some((order, index)) = s.first_non_finite(3) {
            return Err(Error::DerivativeEvaluation {
                order,
                x: to_f64(x),
                theta: to_f64(theta),
                index,
            });
        }
        fill_products(&s, out);
        Ok(())
    }
}

/// Integrates every score product up to total order four and symmetrizes
/// the result.
pub fn moment_table<T: Scalar, M: ParametricModel<T> + ?Sized>(
    model: &M,
    theta: &[T],
    engine: &ExpectationEngine,
) -> Result<MomentTable<T>> {
    let d = model.dim();
    let layout = Layout { d };
    let (values, errs) = engine.expect(model, theta, layout.len(), score_integrand(model, theta))?;
    let err = errs.iter().fold(T::zero(), |m, &e| m.max(e));
    let mut chunks = Vec::with_capacity(9);
    let mut off = 0;
    for (size, rank) in layout.sizes().into_iter().zip([1usize, 2, 2, 3, 3, 3, 4, 4, 4]) {
        chunks.push(Tensor::from_vec(d, rank, values[off..off + size].to_vec()));
        off += size;
    }
    let mut it = chunks.into_iter();
    let mut next = || it.next().expect("nine blocks");
    let table = MomentTable {
        theta: theta.to_vec(),
        score_mean: next(),
        hessian_mean: next(),
        g: next(),
        t: next(),
        ge: next(),
        kappa: next(),
        q: next(),
        m: next(),
        f: next(),
        err,
    };
    Ok(table.symmetrized())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BartlettResiduals<T> {
    /// `E[s_i]`
    pub r1: Tensor<T>,
    /// `g_ij + E[s_ij]`
    pub r2: Tensor<T>,
    pub err: T,
}

impl<T: Scalar> BartlettResiduals<T> {
    pub fn max_abs(&self) -> T {
        self.r1.max_abs().max(self.r2.max_abs())
    }
}

/// First and second Bartlett identities. `E[s_i]` and `E[s_ij]` are integrated
/// afresh with `engine`; `g` comes from `table`.
pub fn bartlett_residuals<T: Scalar, M: ParametricModel<T> + ?Sized>(
    table: &MomentTable<T>,
    model: &M,
    theta: &[T],
    engine: &ExpectationEngine,
) -> Result<BartlettResiduals<T>> {
    let d = model.dim();
    if table.dim() != d {
        return Err(Error::InvalidInput("moment table dimension differs from model".into()));
    }
    let mut s = Scores::new(d);
    let (values, errs) = engine.expect(model, theta, d + d * d, |x, out| {
        model.scores(x, theta, 2, &mut s);
        if let Some((order, index)) = s.first_non_finite(2) {
            return Err(Error::DerivativeEvaluation {
                order,
                x: to_f64(x),
                theta: to_f64(theta),
                index,
            });
        }
        out[..d].copy_from_slice(&s.s1);
        out[d..].copy_from_slice(&s.s2);
        Ok(())
    })?;
    let r1 = Tensor::from_vec(d, 1, values[..d].to_vec());
    let hess = Tensor::from_vec(d, 2, values[d..].to_vec());
    let r2 = table.g.add(&hess.symmetrize_full());
    let err = errs.iter().fold(table.err, |m, &e| m.max(e));
    Ok(BartlettResiduals { r1, r2, err })
}

/// `r_ijk = kappa_ijk + Ge_ijk + Ge_ikj + Ge_jki + T_ijk`, which vanishes when
/// differentiation and integration commute.
pub fn third_moment_identity_residual<T: Scalar>(table: &MomentTable<T>) -> Tensor<T> {
    let d = table.dim();
    Tensor::from_fn(d, 3, |ix| {
        let (i, j, k) = (ix[0], ix[1], ix[2]);
        table.kappa.at3(i, j, k) + table.ge.at3(i, j, k) + table.ge.at3(i, k, j) + table.ge.at3(j, k, i) + table.t.at3(i, j, k)
    })
}
