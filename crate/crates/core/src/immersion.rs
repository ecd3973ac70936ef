//! Extrinsic geometry of the square-root immersion `θ ↦ ψ_θ = √p_θ`.
//!
//! Only inner products of `ψ`-derivatives are needed, and each is a score
//! moment: with `e_i = ∂_iψ = ½s_iψ` and `e_ij = (½s_ij + ¼s_is_j)ψ`,
//! `⟨e_i, e_j⟩ = ¼g_ij`, `⟨e_ij, e_k⟩ = ¼Ge_ijk + ⅛T_ijk` and
//! `⟨e_ij, e_kl⟩ = ¼Q_ijkl + ⅛M_ijkl + ⅛M_klij + F_ijkl/16`.
//! The second fundamental form is the part of `e_ij` normal to the tangent
//! span; the radial direction `ψ` counts as normal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expectation::MomentTable;
use crate::geometry::{metric, Metric};
use crate::linalg;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Ambient inner products of first and second `ψ`-derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AmbientGrams<T> {
    /// `⟨e_i, e_j⟩`
    pub gram_e: Tensor<T>,
    /// `⟨e_ij, e_k⟩`
    pub gram_mix: Tensor<T>,
    /// `⟨e_ij, e_kl⟩`
    pub gram_h: Tensor<T>,
    /// `⟨e_ij, ψ⟩`
    pub radial: Tensor<T>,
}

pub fn ambient_grams<T: Scalar>(table: &MomentTable<T>) -> AmbientGrams<T> {
    let d = table.dim();
    let quarter = T::lit(0.25);
    let eighth = T::lit(0.125);
    let sixteenth = T::lit(0.0625);
    let gram_e = table.g.scale(quarter);
    let gram_mix = Tensor::from_fn(d, 3, |ix| {
        quarter * table.ge.get(ix) + eighth * table.t.get(ix)
    });
    let gram_h = Tensor::from_fn(d, 4, |ix| {
        let (i, j, k, l) = (ix[0], ix[1], ix[2], ix[3]);
        quarter * table.q.at4(i, j, k, l)
            + eighth * (table.m.at4(i, j, k, l) + table.m.at4(k, l, i, j))
            + sixteenth * table.f.at4(i, j, k, l)
    });
    let radial = Tensor::from_fn(d, 2, |ix| {
        T::lit(0.5) * table.hessian_mean.get(ix) + quarter * table.g.get(ix)
    });
    AmbientGrams {
        gram_e,
        gram_mix,
        gram_h,
        radial,
    }
}

/// `⟨II_ij, II_kl⟩ = GramH_ijkl − 4 g^ab GramMix_ija GramMix_klb`.
pub fn sff_gram<T: Scalar>(grams: &AmbientGrams<T>, g_inv: &Tensor<T>) -> Tensor<T> {
    let d = g_inv.dim();
    let mix = &grams.gram_mix;
    // w^b_ij = g^ab GramMix_ija
    let raised = Tensor::from_fn(d, 3, |ix| {
        let (i, j, b) = (ix[0], ix[1], ix[2]);
        (0..d).map(|a| g_inv.at2(a, b) * mix.at3(i, j, a)).sum::<T>()
    });
    Tensor::from_fn(d, 4, |ix| {
        let (i, j, k, l) = (ix[0], ix[1], ix[2], ix[3]);
        let tangential: T = (0..d).map(|b| raised.at3(i, j, b) * mix.at3(k, l, b)).sum();
        grams.gram_h.at4(i, j, k, l) - T::lit(4.0) * tangential
    })
}

/// `S♯_ij = g^kl GramII_ikjl` and `κ² = g^ik g^jl GramII_ijkl`.
pub fn s_sharp<T: Scalar>(gram_ii: &Tensor<T>, g_inv: &Tensor<T>) -> (Tensor<T>, T) {
    let d = g_inv.dim();
    let ssharp = Tensor::from_fn(d, 2, |ix| {
        let (i, j) = (ix[0], ix[1]);
        let mut acc = T::zero();
        for k in 0..d {
            for l in 0..d {
                acc += g_inv.at2(k, l) * gram_ii.at4(i, k, j, l);
            }
        }
        acc
    })
    .symmetrize_full();
    let mut kappa_sq = T::zero();
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    kappa_sq += g_inv.at2(i, k) * g_inv.at2(j, l) * gram_ii.at4(i, j, k, l);
                }
            }
        }
    }
    (ssharp, kappa_sq)
}

/// `R_ijkl − 4(GramII_ikjl − GramII_iljk)`.
pub fn gauss_residual<T: Scalar>(riemann: &Tensor<T>, gram_ii: &Tensor<T>) -> Tensor<T> {
    let d = gram_ii.dim();
    Tensor::from_fn(d, 4, |ix| {
        let (i, j, k, l) = (ix[0], ix[1], ix[2], ix[3]);
        riemann.at4(i, j, k, l) - T::lit(4.0) * (gram_ii.at4(i, k, j, l) - gram_ii.at4(i, l, j, k))
    })
}

/// Matrix of `GramII` on index pairs `i ≤ j`. Congruent to the quadratic
/// form on symmetric tensors, so its inertia is the form's.
pub fn pair_matrix<T: Scalar>(gram_ii: &Tensor<T>) -> Tensor<T> {
    let d = gram_ii.dim();
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).collect();
    let p = pairs.len();
    Tensor::from_fn(p, 2, |ix| {
        let (i, j) = pairs[ix[0]];
        let (k, l) = pairs[ix[1]];
        gram_ii.at4(i, j, k, l)
    })
    .symmetrize_full()
}

/// Efron's statistical curvature for a one-parameter model,
/// `γ² = (ν20 ν02 − ν11²)/ν20³` with `ν20 = g`, `ν11 = E[s_11 s_1]` and
/// `ν02 = Var(s_11)`.
pub fn efron_curvature<T: Scalar>(table: &MomentTable<T>) -> Result<T> {
    if table.dim() != 1 {
        return Err(Error::InvalidInput(format!(
            "statistical curvature is defined for d = 1, got d = {}",
            table.dim()
        )));
    }
    let nu20 = table.g.at2(0, 0);
    let nu11 = table.ge.at3(0, 0, 0);
    let mean2 = table.hessian_mean.at2(0, 0);
    let nu02 = table.q.at4(0, 0, 0, 0) - mean2 * mean2;
    Ok((nu20 * nu02 - nu11 * nu11) / (nu20 * nu20 * nu20))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ImmersionReport<T> {
    pub theta: Vec<T>,
    pub gram_e: Tensor<T>,
    pub gram_mix: Tensor<T>,
    pub gram_h: Tensor<T>,
    pub gram_ii: Tensor<T>,
    pub ssharp: Tensor<T>,
    pub kappa_sq: T,
    pub radial: Tensor<T>,
    /// Smallest eigenvalue of [`pair_matrix`].
    pub gram_ii_min_eig: T,
    /// `max |⟨II_ij, e_c⟩|`, zero up to rounding.
    pub tangency_defect: T,
    /// `max |radial + ¼g|`
    pub radial_defect: T,
    /// Present once a Riemann tensor has been supplied.
    pub gauss_residual: Option<Tensor<T>>,
    /// `d = 1` only.
    pub efron_gamma_sq: Option<T>,
}

impl<T: Scalar> ImmersionReport<T> {
    pub fn gauss_residual_max(&self) -> Option<T> {
        self.gauss_residual.as_ref().map(Tensor::max_abs)
    }

    /// Efron's `γ²` divided by `κ²`.
    pub fn efron_ratio(&self) -> Option<T> {
        self.efron_gamma_sq.map(|g| g / self.kappa_sq)
    }

    pub fn with_gauss(mut self, riemann: &Tensor<T>) -> Self {
        self.gauss_residual = Some(gauss_residual(riemann, &self.gram_ii));
        self
    }
}

pub fn immersion_report<T: Scalar>(table: &MomentTable<T>) -> Result<ImmersionReport<T>> {
    let m = metric(table)?;
    Ok(immersion_report_with(table, &m))
}

pub fn immersion_report_with<T: Scalar>(table: &MomentTable<T>, metric: &Metric<T>) -> ImmersionReport<T> {
    let d = table.dim();
    let grams = ambient_grams(table);
    let gram_ii = sff_gram(&grams, &metric.g_inv);
    let (ssharp, kappa_sq) = s_sharp(&gram_ii, &metric.g_inv);
    let gram_ii_min_eig = linalg::sym_eigenvalues(&pair_matrix(&gram_ii))[0];

    let mut tangency_defect = T::zero();
    for i in 0..d {
        for j in 0..d {
            for c in 0..d {
                let mut proj = T::zero();
                for a in 0..d {
                    for b in 0..d {
                        proj += metric.g_inv.at2(a, b) * grams.gram_mix.at3(i, j, a) * grams.gram_e.at2(b, c);
                    }
                }
                let v = grams.gram_mix.at3(i, j, c) - T::lit(4.0) * proj;
                tangency_defect = tangency_defect.max(v.abs());
            }
        }
    }
    let radial_defect = grams.radial.add(&table.g.scale(T::lit(0.25))).max_abs();
    let efron_gamma_sq = (d == 1).then(|| efron_curvature(table).expect("d = 1"));

    ImmersionReport {
        theta: table.theta.clone(),
        gram_e: grams.gram_e,
        gram_mix: grams.gram_mix,
        gram_h: grams.gram_h,
        gram_ii,
        ssharp,
        kappa_sq,
        radial: grams.radial,
        gram_ii_min_eig,
        tangency_defect,
        radial_defect,
        gauss_residual: None,
        efron_gamma_sq,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_1d(g: f64, t: f64, ge: f64, kappa: f64, q: f64, m: f64, f: f64) -> MomentTable<f64> {
        let s = |rank, v| Tensor::from_vec(1, rank, vec![v]);
        MomentTable {
            theta: vec![0.0],
            g: s(2, g),
            t: s(3, t),
            ge: s(3, ge),
            kappa: s(3, kappa),
            q: s(4, q),
            m: s(4, m),
            f: s(4, f),
            score_mean: s(1, 0.0),
            hessian_mean: s(2, -g),
            err: 0.0,
        }
    }

    #[test]
    fn unit_gaussian_mean_grams() {
        // s = x, s_11 = −1: Q = 1, M = −1, F = 3
        let table = table_1d(1.0, 0.0, 0.0, 0.0, 1.0, -1.0, 3.0);
        let r = immersion_report(&table).unwrap();
        assert_eq!(r.gram_h.data(), &[3.0 / 16.0]);
        assert_eq!(r.gram_ii.data(), &[3.0 / 16.0]);
        assert_eq!(r.ssharp.data(), &[3.0 / 16.0]);
        assert_eq!(r.kappa_sq, 3.0 / 16.0);
        assert_eq!(r.radial.data(), &[-0.25]);
        assert_eq!(r.efron_gamma_sq, Some(0.0));
    }

    #[test]
    fn efron_origin_grams() {
        // s = r₁, s_11 = 2r₂ − 1 with r standard normal
        let table = table_1d(1.0, 0.0, 0.0, 0.0, 5.0, -1.0, 3.0);
        let r = immersion_report(&table).unwrap();
        assert_eq!(r.gram_ii.data(), &[19.0 / 16.0]);
        assert_eq!(r.efron_gamma_sq, Some(4.0));
    }

    #[test]
    fn tangential_second_derivative_has_zero_sff() {
        // Rank-one Gram with e_11 parallel to e_1: GramH = 4·GramMix²/g.
        let g = 2.0;
        let mix = 0.75;
        let mut table = table_1d(g, 0.0, 4.0 * mix, 0.0, 0.0, 0.0, 0.0);
        table.q = Tensor::from_vec(1, 4, vec![4.0 * 4.0 * mix * mix / g]);
        let r = immersion_report(&table).unwrap();
        assert!(r.gram_ii.max_abs() < 1e-15);
    }

    #[test]
    fn one_dimensional_gauss_residual_vanishes() {
        let gram = Tensor::from_vec(1, 4, vec![0.37]);
        let res = gauss_residual(&Tensor::zeros(1, 4), &gram);
        assert_eq!(res.data(), &[0.0]);
    }
}
