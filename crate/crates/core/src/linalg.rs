//! Dense linear algebra for the small matrices that appear here
//! (parameter dimension rarely exceeds a handful).

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Eigen-decomposition of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymEigen<T> {
    pub values: Vec<T>,
    /// Column `k` holds the eigenvector of `values[k]`.
    pub vectors: Tensor<T>,
}

/// Cyclic Jacobi rotations. Accurate to a few ulps for symmetric input.
pub fn sym_eigen<T: Scalar>(m: &Tensor<T>) -> SymEigen<T> {
    assert_eq!(m.rank(), 2);
    let n = m.dim();
    let mut a = m.clone();
    let mut v = Tensor::<T>::identity(n);
    let two = T::lit(2.0);
    for _sweep in 0..64 {
        let mut off = T::zero();
        let mut diag = T::zero();
        for i in 0..n {
            diag += a.at2(i, i) * a.at2(i, i);
            for j in (i + 1)..n {
                off += a.at2(i, j) * a.at2(i, j);
            }
        }
        if off <= T::epsilon() * T::epsilon() * diag.max(T::min_positive_value()) || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.at2(p, q);
                if apq == T::zero() {
                    continue;
                }
                let theta = (a.at2(q, q) - a.at2(p, p)) / (two * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.at2(k, p);
                    let akq = a.at2(k, q);
                    *a.at2_mut(k, p) = c * akp - s * akq;
                    *a.at2_mut(k, q) = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a.at2(p, k);
                    let aqk = a.at2(q, k);
                    *a.at2_mut(p, k) = c * apk - s * aqk;
                    *a.at2_mut(q, k) = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v.at2(k, p);
                    let vkq = v.at2(k, q);
                    *v.at2_mut(k, p) = c * vkp - s * vkq;
                    *v.at2_mut(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.at2(i, i).partial_cmp(&a.at2(j, j)).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| a.at2(i, i)).collect();
    let vectors = Tensor::from_fn(n, 2, |ix| v.at2(ix[0], order[ix[1]]));
    SymEigen { values, vectors }
}

pub fn sym_eigenvalues<T: Scalar>(m: &Tensor<T>) -> Vec<T> {
    sym_eigen(m).values
}

/// Rebuilds `V f(Λ) Vᵀ`.
pub fn sym_apply<T: Scalar>(eig: &SymEigen<T>, f: impl Fn(T) -> T) -> Tensor<T> {
    let n = eig.values.len();
    let fv: Vec<T> = eig.values.iter().map(|&x| f(x)).collect();
    Tensor::from_fn(n, 2, |ix| {
        (0..n)
            .map(|k| eig.vectors.at2(ix[0], k) * fv[k] * eig.vectors.at2(ix[1], k))
            .sum()
    })
}

pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let n = a.dim();
    Tensor::from_fn(n, 2, |ix| (0..n).map(|k| a.at2(ix[0], k) * b.at2(k, ix[1])).sum())
}

pub fn transpose<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    Tensor::from_fn(a.dim(), 2, |ix| a.at2(ix[1], ix[0]))
}

pub fn matvec<T: Scalar>(a: &Tensor<T>, v: &[T]) -> Vec<T> {
    let n = a.dim();
    (0..n).map(|i| (0..n).map(|k| a.at2(i, k) * v[k]).sum()).collect()
}

/// `Bᵀ M B` for a (0,2)-tensor `M` and a Jacobian `B`.
pub fn congruence<T: Scalar>(m: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    matmul(&transpose(b), &matmul(m, b))
}

/// Gauss–Jordan inverse with partial pivoting. Fails on exactly singular input.
pub fn inverse<T: Scalar>(m: &Tensor<T>) -> Result<Tensor<T>> {
    let n = m.dim();
    let mut a = m.clone();
    let mut inv = Tensor::<T>::identity(n);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                a.at2(i, col)
                    .abs()
                    .partial_cmp(&a.at2(j, col).abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap_or(col);
        let pv = a.at2(pivot, col);
        if pv == T::zero() || !pv.is_finite() {
            return Err(Error::SingularMatrix);
        }
        if pivot != col {
            for k in 0..n {
                let (x, y) = (a.at2(col, k), a.at2(pivot, k));
                *a.at2_mut(col, k) = y;
                *a.at2_mut(pivot, k) = x;
                let (x, y) = (inv.at2(col, k), inv.at2(pivot, k));
                *inv.at2_mut(col, k) = y;
                *inv.at2_mut(pivot, k) = x;
            }
        }
        let scale = T::one() / pv;
        for k in 0..n {
            *a.at2_mut(col, k) *= scale;
            *inv.at2_mut(col, k) *= scale;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a.at2(r, col);
            if f == T::zero() {
                continue;
            }
            for k in 0..n {
                let ack = a.at2(col, k);
                let ick = inv.at2(col, k);
                *a.at2_mut(r, k) -= f * ack;
                *inv.at2_mut(r, k) -= f * ick;
            }
        }
    }
    Ok(inv)
}

/// Condition number of a symmetric matrix in the 2-norm.
pub fn sym_condition<T: Scalar>(m: &Tensor<T>) -> T {
    let ev = sym_eigenvalues(m);
    let lo = ev.iter().fold(T::infinity(), |a, &b| a.min(b.abs()));
    let hi = ev.iter().fold(T::zero(), |a, &b| a.max(b.abs()));
    if lo == T::zero() {
        T::infinity()
    } else {
        hi / lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spd(seed: &[f64]) -> Tensor<f64> {
        let n = 3;
        let b = Tensor::from_fn(n, 2, |ix| seed[ix[0] * n + ix[1]]);
        let mut m = matmul(&transpose(&b), &b);
        for i in 0..n {
            *m.at2_mut(i, i) += 0.5;
        }
        m
    }

    #[test]
    fn eigen_of_diagonal() {
        let m = Tensor::from_vec(2, 2, vec![3.0, 0.0, 0.0, -1.0]);
        let e = sym_eigen(&m);
        assert_eq!(e.values, vec![-1.0, 3.0]);
    }

    #[test]
    fn rank_one_matrix() {
        let m = Tensor::from_vec(2, 2, vec![2.0f64, 2.0, 2.0, 2.0]);
        let e = sym_eigen(&m);
        assert!(e.values[0].abs() < 1e-15);
        assert!((e.values[1] - 4.0).abs() < 1e-14);
        let v0 = (e.vectors.at2(0, 0), e.vectors.at2(1, 0));
        assert!((v0.0 + v0.1).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn eigen_reconstructs(seed in proptest::collection::vec(-2.0f64..2.0, 9)) {
            let m = spd(&seed);
            let e = sym_eigen(&m);
            let back = sym_apply(&e, |x| x);
            prop_assert!(back.max_abs_diff(&m) < 1e-12 * (1.0 + m.max_abs()));
            let vtv = matmul(&transpose(&e.vectors), &e.vectors);
            prop_assert!(vtv.max_abs_diff(&Tensor::identity(3)) < 1e-13);
        }

        #[test]
        fn inverse_times_matrix_is_identity(seed in proptest::collection::vec(-2.0f64..2.0, 9)) {
            let m = spd(&seed);
            let inv = inverse(&m).unwrap();
            let id = matmul(&inv, &m);
            prop_assert!(id.max_abs_diff(&Tensor::identity(3)) < 1e-10 * sym_condition(&m));
        }

        #[test]
        fn inverse_sqrt_whitens(seed in proptest::collection::vec(-2.0f64..2.0, 9)) {
            let m = spd(&seed);
            let a = sym_apply(&sym_eigen(&m), |x| 1.0 / x.sqrt());
            let w = congruence(&m, &a);
            prop_assert!(w.max_abs_diff(&Tensor::identity(3)) < 1e-11 * sym_condition(&m));
        }
    }

    #[test]
    fn singular_inverse_fails() {
        let m = Tensor::from_vec(2, 2, vec![1.0, 1.0, 1.0, 1.0]);
        assert!(inverse(&m).is_err());
    }
}
