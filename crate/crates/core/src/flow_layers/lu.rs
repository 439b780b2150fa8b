//! Invertible linear layer `x = P·L·U·z`.
//!
//! `L` is unit lower triangular, `U` upper triangular with diagonal
//! `softplus(raw + c) + 1e-3` (exactly 1 at `raw = 0`). `P` is a fixed
//! permutation chosen at construction.

use super::params::ParamStore;
use crate::autodiff::Scalar;
use crate::special_fn::softplus_inv;
use std::ops::Range;

pub const MIN_DIAGONAL: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct LuLayer {
    dim: usize,
    lower: Range<usize>,
    upper: Range<usize>,
    diag: Range<usize>,
    // x[i] = y[perm[i]]
    perm: Vec<usize>,
}

fn packed(i: usize, j: usize) -> usize {
    // strictly-lower pair (i, j), j < i
    i * (i - 1) / 2 + j
}

impl LuLayer {
    /// Reverse-order permutation; `L = U = I` at initialization.
    pub fn new(store: &mut ParamStore, prefix: &str, dim: usize) -> Self {
        Self::with_permutation(store, prefix, (0..dim).rev().collect())
    }

    pub fn with_permutation(store: &mut ParamStore, prefix: &str, perm: Vec<usize>) -> Self {
        let dim = perm.len();
        assert!(dim >= 1);
        let mut seen = vec![false; dim];
        for &p in &perm {
            assert!(p < dim && !seen[p], "not a permutation");
            seen[p] = true;
        }
        let tri = dim * (dim - 1) / 2;
        let lower = store.alloc(format!("{prefix}.lower"), &[tri], |_| 0.0);
        let upper = store.alloc(format!("{prefix}.upper"), &[tri], |_| 0.0);
        let diag = store.alloc(format!("{prefix}.diag"), &[dim], |_| 0.0);
        Self {
            dim,
            lower,
            upper,
            diag,
            perm,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn param_range(&self) -> Range<usize> {
        self.lower.start..self.diag.end
    }

    fn l<S: Scalar>(&self, p: &[S], i: usize, j: usize) -> S {
        p[self.lower.start + packed(i, j)]
    }

    fn u<S: Scalar>(&self, p: &[S], i: usize, j: usize) -> S {
        p[self.upper.start + packed(j, i)]
    }

    fn diagonal<S: Scalar>(&self, p: &[S]) -> Vec<S> {
        let c = softplus_inv(1.0 - MIN_DIAGONAL);
        p[self.diag.clone()].iter().map(|&r| (r + c).softplus() + MIN_DIAGONAL).collect()
    }

    /// Dense `(L, U)` for inspection.
    pub fn factors(&self, params: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let d = self.dim;
        let diag = self.diagonal(params);
        let mut l = vec![vec![0.0; d]; d];
        let mut u = vec![vec![0.0; d]; d];
        for i in 0..d {
            l[i][i] = 1.0;
            u[i][i] = diag[i];
            for j in 0..i {
                l[i][j] = self.l(params, i, j);
                u[j][i] = self.u(params, j, i);
            }
        }
        (l, u)
    }

    /// `(P L U z, Σ ln U_ii)`.
    pub fn forward(&self, params: &[f64], z: &[f64]) -> (Vec<f64>, f64) {
        let d = self.dim;
        let diag = self.diagonal(params);
        let uz: Vec<f64> = (0..d)
            .map(|i| diag[i] * z[i] + (i + 1..d).map(|j| self.u(params, i, j) * z[j]).sum::<f64>())
            .collect();
        let y: Vec<f64> = (0..d)
            .map(|i| uz[i] + (0..i).map(|j| self.l(params, i, j) * uz[j]).sum::<f64>())
            .collect();
        let x = self.perm.iter().map(|&p| y[p]).collect();
        (x, diag.iter().map(|v| v.ln()).sum())
    }

    /// Two triangular solves: `(z, -Σ ln U_ii)`.
    pub fn inverse<S: Scalar>(&self, params: &[S], x: &[S]) -> (Vec<S>, S) {
        let d = self.dim;
        let diag = self.diagonal(params);
        let mut b = vec![S::cst(0.0); d];
        for (i, &p) in self.perm.iter().enumerate() {
            b[p] = x[i];
        }
        let mut y: Vec<S> = Vec::with_capacity(d);
        for (i, &bi) in b.iter().enumerate() {
            let s = S::sum_products(S::cst(0.0), (0..i).map(|j| (self.l(params, i, j), y[j])));
            y.push(bi - s);
        }
        let mut z = vec![S::cst(0.0); d];
        for i in (0..d).rev() {
            let s = S::sum_products(S::cst(0.0), (i + 1..d).map(|j| (self.u(params, i, j), z[j])));
            z[i] = (y[i] - s) / diag[i];
        }
        let logs: Vec<S> = diag.iter().map(|&v| v.ln()).collect();
        (z, -S::sum(&logs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_at_init_with_trivial_permutation() {
        let mut store = ParamStore::new();
        let lu = LuLayer::with_permutation(&mut store, "lu", vec![0, 1, 2]);
        let (x, ld) = lu.forward(&store.values, &[1.0, -2.0, 0.5]);
        assert_eq!(x, vec![1.0, -2.0, 0.5]);
        assert!(ld.abs() < 1e-15);
    }

    #[test]
    fn default_reverses() {
        let mut store = ParamStore::new();
        let lu = LuLayer::new(&mut store, "lu", 3);
        let (x, _) = lu.forward(&store.values, &[1.0, 2.0, 3.0]);
        assert_eq!(x, vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn scaled_diagonal_log_det() {
        let mut store = ParamStore::new();
        let lu = LuLayer::new(&mut store, "lu", 4);
        let c = 2.5;
        let raw = softplus_inv(c - MIN_DIAGONAL) - softplus_inv(1.0 - MIN_DIAGONAL);
        for i in lu.diag.clone() {
            store.values[i] = raw;
        }
        let (_, ld) = lu.forward(&store.values, &[0.0; 4]);
        assert!((ld - 4.0 * c.ln()).abs() < 1e-12);
    }

    #[test]
    fn roundtrip_d10() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut store = ParamStore::new();
        let lu = LuLayer::new(&mut store, "lu", 10);
        for v in store.values.iter_mut() {
            *v = rng.gen_range(-0.5..0.5);
        }
        let z: Vec<f64> = (0..10).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let (x, ld_f) = lu.forward(&store.values, &z);
        let (back, ld_i) = lu.inverse(&store.values, &x);
        for (a, b) in z.iter().zip(&back) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!((ld_f + ld_i).abs() < 1e-12);
    }

    #[test]
    fn log_det_matches_determinant() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut store = ParamStore::new();
        let lu = LuLayer::new(&mut store, "lu", 3);
        for v in store.values.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        // columns of the Jacobian are images of unit vectors
        let cols: Vec<Vec<f64>> = (0..3)
            .map(|j| {
                let mut e = [0.0; 3];
                e[j] = 1.0;
                lu.forward(&store.values, &e).0
            })
            .collect();
        let m = |i: usize, j: usize| cols[j][i];
        let det = m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
            + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
        let (_, ld) = lu.forward(&store.values, &[0.0; 3]);
        assert!((det.abs().ln() - ld).abs() < 1e-10);
    }
}
