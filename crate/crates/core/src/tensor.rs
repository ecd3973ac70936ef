//! Small dense tensors over a `d`-dimensional index set.
//!
//! Every tensor in the crate has all indices ranging over the parameter
//! dimension `d`, so a single row-major container indexed by rank suffices.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Tensor<T> {
    dim: usize,
    rank: usize,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(dim: usize, rank: usize) -> Self {
        Self {
            dim,
            rank,
            data: vec![T::zero(); dim.pow(rank as u32)],
        }
    }

    pub fn from_vec(dim: usize, rank: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), dim.pow(rank as u32), "tensor data length");
        Self { dim, rank, data }
    }

    /// Builds a tensor by evaluating `f` on every multi-index.
    pub fn from_fn(dim: usize, rank: usize, mut f: impl FnMut(&[usize]) -> T) -> Self {
        let mut out = Self::zeros(dim, rank);
        let mut idx = vec![0usize; rank];
        for flat in 0..out.data.len() {
            out.unflatten(flat, &mut idx);
            out.data[flat] = f(&idx);
        }
        out
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_fn(dim, 2, |ix| if ix[0] == ix[1] { T::one() } else { T::zero() })
    }

    pub fn scalar(value: T) -> Self {
        Self::from_vec(1, 0, vec![value])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn rank(&self) -> usize {
        self.rank
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.rank);
        idx.iter().fold(0, |acc, &i| acc * self.dim + i)
    }

    fn unflatten(&self, mut flat: usize, idx: &mut [usize]) {
        for slot in idx.iter_mut().rev() {
            *slot = flat % self.dim;
            flat /= self.dim;
        }
    }

    #[inline]
    pub fn get(&self, idx: &[usize]) -> T {
        self.data[self.flat_index(idx)]
    }

    #[inline]
    pub fn set(&mut self, idx: &[usize], v: T) {
        let f = self.flat_index(idx);
        self.data[f] = v;
    }

    #[inline]
    pub fn at1(&self, i: usize) -> T {
        self.data[i]
    }

    #[inline]
    pub fn at2(&self, i: usize, j: usize) -> T {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn at3(&self, i: usize, j: usize, k: usize) -> T {
        let d = self.dim;
        self.data[(i * d + j) * d + k]
    }

    #[inline]
    pub fn at4(&self, i: usize, j: usize, k: usize, l: usize) -> T {
        let d = self.dim;
        self.data[((i * d + j) * d + k) * d + l]
    }

    #[inline]
    pub fn at2_mut(&mut self, i: usize, j: usize) -> &mut T {
        let d = self.dim;
        &mut self.data[i * d + j]
    }

    #[inline]
    pub fn at3_mut(&mut self, i: usize, j: usize, k: usize) -> &mut T {
        let d = self.dim;
        &mut self.data[(i * d + j) * d + k]
    }

    #[inline]
    pub fn at4_mut(&mut self, i: usize, j: usize, k: usize, l: usize) -> &mut T {
        let d = self.dim;
        &mut self.data[((i * d + j) * d + k) * d + l]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            dim: self.dim,
            rank: self.rank,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!((self.dim, self.rank), (other.dim, other.rank), "shape mismatch");
        Self {
            dim: self.dim,
            rank: self.rank,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|x| x * s)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.sub(other).max_abs()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Averages the tensor over the group generated by the given axis
    /// permutations. `perms` must list the whole group (identity included).
    pub fn symmetrize_over(&self, perms: &[&[usize]]) -> Self {
        let norm = T::one() / T::from_usize_lossy(perms.len());
        let mut permuted = vec![0usize; self.rank];
        Self::from_fn(self.dim, self.rank, |idx| {
            let mut acc = T::zero();
            for p in perms {
                for (slot, &axis) in permuted.iter_mut().zip(p.iter()) {
                    *slot = idx[axis];
                }
                acc += self.get(&permuted);
            }
            acc * norm
        })
    }

    /// Average over all permutations of the axes.
    pub fn symmetrize_full(&self) -> Self {
        let perms = all_permutations(self.rank);
        let refs: Vec<&[usize]> = perms.iter().map(Vec::as_slice).collect();
        self.symmetrize_over(&refs)
    }

    /// Largest deviation from invariance under one axis permutation.
    pub fn asymmetry(&self, perm: &[usize]) -> T {
        let mut permuted = vec![0usize; self.rank];
        let mut idx = vec![0usize; self.rank];
        let mut worst = T::zero();
        for flat in 0..self.data.len() {
            self.unflatten(flat, &mut idx);
            for (slot, &axis) in permuted.iter_mut().zip(perm.iter()) {
                *slot = idx[axis];
            }
            worst = worst.max((self.data[flat] - self.get(&permuted)).abs());
        }
        worst
    }

    /// Largest deviation from full permutation symmetry.
    pub fn full_asymmetry(&self) -> T {
        all_permutations(self.rank)
            .iter()
            .map(|p| self.asymmetry(p))
            .fold(T::zero(), T::max)
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            dim: self.dim,
            rank: self.rank,
            data: self.data.iter().map(|&x| U::lit(x.as_f64())).collect(),
        }
    }
}

pub(crate) fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(n), &mut vec![false; n], &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_index_is_row_major() {
        let t = Tensor::<f64>::from_fn(3, 3, |ix| (ix[0] * 100 + ix[1] * 10 + ix[2]) as f64);
        assert_eq!(t.at3(1, 2, 0), 120.0);
        assert_eq!(t.get(&[2, 0, 1]), 201.0);
        assert_eq!(t.data()[t.flat_index(&[1, 1, 1])], 111.0);
    }

    #[test]
    fn full_symmetrization_is_idempotent() {
        let t = Tensor::<f64>::from_fn(2, 3, |ix| (ix[0] + 2 * ix[1] + 5 * ix[2]) as f64);
        let s = t.symmetrize_full();
        assert!(s.full_asymmetry() < 1e-15);
        assert!(s.max_abs_diff(&s.symmetrize_full()) < 1e-14);
        assert!(t.full_asymmetry() > 0.5);
    }

    #[test]
    fn pair_symmetrization() {
        let t = Tensor::<f64>::from_fn(2, 4, |ix| (ix[0] + 3 * ix[1] + 7 * ix[2] * ix[3]) as f64);
        let s = t.symmetrize_over(&[&[0, 1, 2, 3], &[1, 0, 2, 3]]);
        assert!(s.asymmetry(&[1, 0, 2, 3]) < 1e-15);
    }

    #[test]
    fn permutation_count() {
        assert_eq!(all_permutations(4).len(), 24);
        assert_eq!(all_permutations(0), vec![Vec::<usize>::new()]);
    }
}
