//! Quadrature rules: Gauss–Hermite nodes and a globally adaptive
//! Gauss–Kronrod (7/15) integrator for vector-valued integrands.

use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Nodes and weights for `∫ f(z) e^{−z²/2} dz` (probabilists' Hermite weight).
///
/// Physicists' nodes come from Newton iteration on the orthonormal Hermite
/// recurrence and are then rescaled by `√2`.
pub fn gauss_hermite(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1, "Gauss-Hermite order must be positive");
    let n = order;
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    let s2 = std::f64::consts::SQRT_2;
    let nodes = x.iter().rev().map(|&v| v * s2).collect();
    let weights = w.iter().rev().map(|&v| v * s2).collect();
    (nodes, weights)
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS_K: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GK_WEIGHTS_G: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Tolerances for [`adaptive_integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveTol {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for AdaptiveTol {
    fn default() -> Self {
        Self {
            abs: 1e-10,
            rel: 1e-8,
            max_intervals: 4000,
        }
    }
}

struct Panel<T> {
    a: T,
    b: T,
    value: Vec<T>,
    err: Vec<T>,
    key: T,
}

impl<T: Scalar> PartialEq for Panel<T> {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}
impl<T: Scalar> Eq for Panel<T> {}
impl<T: Scalar> PartialOrd for Panel<T> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Scalar> Ord for Panel<T> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key
            .partial_cmp(&other.key)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| other.a.partial_cmp(&self.a).unwrap_or(std::cmp::Ordering::Equal))
    }
}

fn gk15<T: Scalar>(f: &mut impl FnMut(T, &mut [T]), a: T, b: T, len: usize, buf: &mut [T]) -> Result<(Vec<T>, Vec<T>)> {
    let half = (b - a) * T::lit(0.5);
    let mid = (a + b) * T::lit(0.5);
    let mut kron = vec![T::zero(); len];
    let mut gauss = vec![T::zero(); len];
    let mut eval = |x: T, wk: T, wg: Option<T>, buf: &mut [T]| -> Result<()> {
        f(x, buf);
        for c in 0..len {
            if !buf[c].is_finite() {
                return Err(Error::Expectation(format!("non-finite integrand at {x}")));
            }
            kron[c] += wk * buf[c];
            if let Some(wg) = wg {
                gauss[c] += wg * buf[c];
            }
        }
        Ok(())
    };
    for (k, &node) in GK_NODES.iter().enumerate() {
        let wk = T::lit(GK_WEIGHTS_K[k]);
        // Gauss nodes are the odd-indexed Kronrod nodes (k = 1, 3, 5, 7)
        let wg = (k % 2 == 1).then(|| T::lit(GK_WEIGHTS_G[k / 2]));
        if node == 0.0 {
            eval(mid, wk, wg, buf)?;
        } else {
            let dx = half * T::lit(node);
            eval(mid - dx, wk, wg, buf)?;
            eval(mid + dx, wk, wg, buf)?;
        }
    }
    let value: Vec<T> = kron.iter().map(|&k| k * half).collect();
    let err: Vec<T> = kron
        .iter()
        .zip(&gauss)
        .map(|(&k, &g)| ((k - g) * half).abs() + T::lit(50.0) * T::epsilon() * (k * half).abs())
        .collect();
    Ok((value, err))
}

/// Globally adaptive GK15 on `[a, b]` for an integrand writing `len` values.
///
/// `breakpoints` (inside `(a, b)`) seed the initial partition. Stops when
/// every component satisfies `err ≤ max(abs, rel·|value|)`. Returns values
/// and per-component error estimates.
pub fn adaptive_integrate<T: Scalar>(
    mut f: impl FnMut(T, &mut [T]),
    a: T,
    b: T,
    breakpoints: &[T],
    len: usize,
    tol: AdaptiveTol,
) -> Result<(Vec<T>, Vec<T>)> {
    let mut edges = vec![a];
    edges.extend(breakpoints.iter().copied().filter(|&p| p > a && p < b));
    edges.push(b);
    let mut buf = vec![T::zero(); len];
    let mut heap = BinaryHeap::new();
    let mut total = vec![T::zero(); len];
    let mut total_err = vec![T::zero(); len];
    for w in edges.windows(2) {
        let (value, err) = gk15(&mut f, w[0], w[1], len, &mut buf)?;
        for c in 0..len {
            total[c] += value[c];
            total_err[c] += err[c];
        }
        let key = err.iter().fold(T::zero(), |m, &e| m.max(e));
        heap.push(Panel { a: w[0], b: w[1], value, err, key });
    }
    let abs = T::lit(tol.abs);
    let rel = T::lit(tol.rel);
    let converged = |total: &[T], total_err: &[T]| {
        total.iter().zip(total_err).all(|(&v, &e)| e <= abs.max(rel * v.abs()))
    };
    while !converged(&total, &total_err) {
        if heap.len() >= tol.max_intervals {
            let worst = total_err.iter().fold(T::zero(), |m, &e| m.max(e));
            return Err(Error::Expectation(format!(
                "adaptive quadrature did not converge after {} intervals (error {:e})",
                heap.len(),
                worst.as_f64()
            )));
        }
        let panel = heap.pop().expect("non-empty heap");
        let mid = (panel.a + panel.b) * T::lit(0.5);
        for c in 0..len {
            total[c] -= panel.value[c];
            total_err[c] -= panel.err[c];
        }
        for (lo, hi) in [(panel.a, mid), (mid, panel.b)] {
            let (value, err) = gk15(&mut f, lo, hi, len, &mut buf)?;
            for c in 0..len {
                total[c] += value[c];
                total_err[c] += err[c];
            }
            let key = err.iter().fold(T::zero(), |m, &e| m.max(e));
            heap.push(Panel { a: lo, b: hi, value, err, key });
        }
    }
    // Recompute totals in a fixed (left-to-right) order so the result does not
    // carry the refinement history's rounding.
    let mut panels = heap.into_vec();
    panels.sort_by(|p, q| p.a.partial_cmp(&q.a).unwrap_or(std::cmp::Ordering::Equal));
    let mut value = vec![T::zero(); len];
    let mut err = vec![T::zero(); len];
    for p in &panels {
        for c in 0..len {
            value[c] += p.value[c];
            err[c] += p.err[c];
        }
    }
    Ok((value, err))
}

/// Scalar convenience wrapper around [`adaptive_integrate`].
pub fn adaptive_integrate_scalar<T: Scalar>(
    f: impl Fn(T) -> T,
    a: T,
    b: T,
    breakpoints: &[T],
    tol: AdaptiveTol,
) -> Result<(T, T)> {
    let (v, e) = adaptive_integrate(|x, out: &mut [T]| out[0] = f(x), a, b, breakpoints, 1, tol)?;
    Ok((v[0], e[0]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_weights_integrate_gaussian_moments() {
        let (z, w) = gauss_hermite(12);
        let norm = (2.0 * std::f64::consts::PI).sqrt();
        let moment = |p: i32| z.iter().zip(&w).map(|(&x, &wt)| wt * x.powi(p)).sum::<f64>() / norm;
        assert!((moment(0) - 1.0).abs() < 1e-14);
        assert!(moment(1).abs() < 1e-14);
        assert!((moment(2) - 1.0).abs() < 1e-13);
        assert!((moment(4) - 3.0).abs() < 1e-13);
        assert!((moment(8) - 105.0).abs() < 1e-11);
        assert!(z.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn hermite_high_order_still_normalized() {
        for n in [1, 2, 5, 40, 80] {
            let (_, w) = gauss_hermite(n);
            let s: f64 = w.iter().sum();
            assert!((s - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12, "order {n}: {s}");
        }
    }

    #[test]
    fn adaptive_handles_peaked_integrand() {
        let tol = AdaptiveTol { abs: 1e-14, rel: 1e-12, max_intervals: 4000 };
        let (v, e) = adaptive_integrate_scalar(|x: f64| (-1e4 * x * x).exp(), -1.0, 1.0, &[], tol).unwrap();
        let exact = (std::f64::consts::PI / 1e4).sqrt();
        assert!((v - exact).abs() < 1e-13, "{v} vs {exact}");
        assert!(e < 1e-12);
    }

    #[test]
    fn adaptive_vector_components() {
        let (v, _) = adaptive_integrate(
            |x: f64, out: &mut [f64]| {
                out[0] = x.sin();
                out[1] = x * x;
            },
            0.0,
            std::f64::consts::PI,
            &[1.0],
            2,
            AdaptiveTol::default(),
        )
        .unwrap();
        assert!((v[0] - 2.0).abs() < 1e-12);
        assert!((v[1] - std::f64::consts::PI.powi(3) / 3.0).abs() < 1e-11);
    }
}
