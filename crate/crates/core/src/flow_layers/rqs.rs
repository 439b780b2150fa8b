//! Monotone rational-quadratic spline on `[-B, B]`, identity outside.
//!
//! Knots are decoded from `3K - 1` raw values per dimension: `K` bin widths,
//! `K` bin heights (normalized exponentials with a floor) and `K - 1` interior
//! derivatives (softplus with a floor). Boundary derivatives are fixed at 1 so
//! the spline joins the identity tails with a continuous slope.

use rand::Rng;

use super::conditioner::MaskedConditioner;
use super::params::ParamStore;
use crate::autodiff::Scalar;
use crate::special_fn::softplus_inv;

pub const DEFAULT_BINS: usize = 8;
pub const DEFAULT_BOUND: f64 = 2.5;
pub const MIN_BIN_WIDTH: f64 = 1e-3;
pub const MIN_BIN_HEIGHT: f64 = 1e-3;
pub const MIN_DERIVATIVE: f64 = 1e-3;

/// Knot positions, heights and derivatives of one spline.
#[derive(Debug, Clone)]
pub struct SplineKnots<S> {
    pub xs: Vec<S>,
    pub ys: Vec<S>,
    pub derivs: Vec<S>,
    pub bound: f64,
}

/// Raw values per dimension for `bins` bins.
pub fn raw_len(bins: usize) -> usize {
    3 * bins - 1
}

fn normalized_cumulative<S: Scalar>(raw: &[S], floor: f64, bound: f64) -> Vec<S> {
    let k = raw.len();
    let max = raw.iter().map(|r| r.value()).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<S> = raw.iter().map(|&r| (r - max).exp()).collect();
    let total = S::sum(&e);
    let span = 2.0 * bound;
    let mut knots = Vec::with_capacity(k + 1);
    knots.push(S::cst(-bound));
    let mut acc = S::cst(-bound);
    for (i, &ei) in e.iter().enumerate() {
        if i + 1 == k {
            knots.push(S::cst(bound));
        } else {
            let frac = ei / total * (1.0 - floor * k as f64) + floor;
            acc = acc + frac * span;
            knots.push(acc);
        }
    }
    knots
}

impl<S: Scalar> SplineKnots<S> {
    /// Decodes `3K - 1` raw values. All-zero raw values give the identity.
    pub fn from_raw(raw: &[S], bound: f64) -> Self {
        assert!(raw.len() >= 2 && (raw.len() + 1).is_multiple_of(3), "raw length must be 3K-1");
        let k = (raw.len() + 1) / 3;
        let xs = normalized_cumulative(&raw[..k], MIN_BIN_WIDTH, bound);
        let ys = normalized_cumulative(&raw[k..2 * k], MIN_BIN_HEIGHT, bound);
        let offset = softplus_inv(1.0 - MIN_DERIVATIVE);
        let mut derivs = Vec::with_capacity(k + 1);
        derivs.push(S::cst(1.0));
        derivs.extend(raw[2 * k..].iter().map(|&r| (r + offset).softplus() + MIN_DERIVATIVE));
        derivs.push(S::cst(1.0));
        Self { xs, ys, derivs, bound }
    }

    pub fn bins(&self) -> usize {
        self.xs.len() - 1
    }

    fn bin_of(knots: &[S], v: f64) -> usize {
        // last k with knots[k] <= v, clamped to a valid bin
        let k = knots.partition_point(|kn| kn.value() <= v);
        k.saturating_sub(1).min(knots.len() - 2)
    }

    /// `(y, ln dy/dx)`.
    pub fn forward(&self, x: S) -> (S, S) {
        let v = x.value();
        if v <= -self.bound || v >= self.bound {
            return (x, S::cst(0.0));
        }
        let k = Self::bin_of(&self.xs, v);
        let w = self.xs[k + 1] - self.xs[k];
        let h = self.ys[k + 1] - self.ys[k];
        let s = h / w;
        let (d0, d1) = (self.derivs[k], self.derivs[k + 1]);
        let xi = (x - self.xs[k]) / w;
        let t = xi * (S::cst(1.0) - xi);
        let den = s + (d1 + d0 - s * 2.0) * t;
        let y = self.ys[k] + h * (s * xi * xi + d0 * t) / den;
        let one_m = S::cst(1.0) - xi;
        let num = d1 * xi * xi + s * t * 2.0 + d0 * one_m * one_m;
        let log_slope = (s * s * num).ln() - den.ln() * 2.0;
        (y, log_slope)
    }

    /// `(x, ln dx/dy)`.
    pub fn inverse(&self, y: S) -> (S, S) {
        let v = y.value();
        if v <= -self.bound || v >= self.bound {
            return (y, S::cst(0.0));
        }
        let k = Self::bin_of(&self.ys, v);
        let w = self.xs[k + 1] - self.xs[k];
        let h = self.ys[k + 1] - self.ys[k];
        let s = h / w;
        let (d0, d1) = (self.derivs[k], self.derivs[k + 1]);
        let dy = y - self.ys[k];
        let curv = d1 + d0 - s * 2.0;
        let a = h * (s - d0) + dy * curv;
        let b = h * d0 - dy * curv;
        let c = -s * dy;
        let disc = (b * b - a * c * 4.0).max(S::cst(0.0));
        let xi = c * 2.0 / (-b - disc.sqrt());
        let x = xi * w + self.xs[k];
        let t = xi * (S::cst(1.0) - xi);
        let den = s + curv * t;
        let one_m = S::cst(1.0) - xi;
        let num = d1 * xi * xi + s * t * 2.0 + d0 * one_m * one_m;
        let log_slope = den.ln() * 2.0 - (s * s * num).ln();
        (x, log_slope)
    }
}

/// Free-standing spline evaluation: `(x, ln dx/dz)`.
pub fn rqs_forward(z: f64, knots: &SplineKnots<f64>) -> (f64, f64) {
    knots.forward(z)
}

/// Inverse of [`rqs_forward`]: `(z, ln dz/dx)`.
pub fn rqs_inverse(x: f64, knots: &SplineKnots<f64>) -> (f64, f64) {
    knots.inverse(x)
}

/// Autoregressive spline layer: `x_i = spline(z_i; h_i(x_<i))`.
#[derive(Debug, Clone)]
pub struct RqsLayer {
    pub(crate) conditioner: MaskedConditioner,
    bins: usize,
    bound: f64,
}

impl RqsLayer {
    pub fn new<R: Rng>(store: &mut ParamStore, prefix: &str, dim: usize, bins: usize, bound: f64, rng: &mut R) -> Self {
        let conditioner = MaskedConditioner::new(
            store,
            &format!("{prefix}.cond"),
            dim,
            MaskedConditioner::default_hidden(dim),
            raw_len(bins),
            rng,
        );
        Self { conditioner, bins, bound }
    }

    pub fn dim(&self) -> usize {
        self.conditioner.dim()
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// Density direction (single conditioner pass): `(z, ln|det ∂z/∂x|)`.
    pub fn inverse<S: Scalar>(&self, params: &[S], x: &[S]) -> (Vec<S>, S) {
        let raw = self.conditioner.forward(params, x);
        let per = raw_len(self.bins);
        let mut log_dets = Vec::with_capacity(x.len());
        let z = x
            .iter()
            .enumerate()
            .map(|(i, &xi)| {
                let knots = SplineKnots::from_raw(&raw[i * per..(i + 1) * per], self.bound);
                let (zi, ld) = knots.inverse(xi);
                log_dets.push(ld);
                zi
            })
            .collect();
        (z, S::sum(&log_dets))
    }

    /// Sampling direction, one coordinate at a time: `(x, ln|det ∂x/∂z|)`.
    pub fn forward(&self, params: &[f64], z: &[f64]) -> (Vec<f64>, f64) {
        let mut x = vec![0.0; z.len()];
        let mut log_det = 0.0;
        for i in 0..z.len() {
            let raw = self.conditioner.forward_dim(params, &x, i);
            let knots = SplineKnots::from_raw(&raw, self.bound);
            let (xi, ld) = knots.forward(z[i]);
            x[i] = xi;
            log_det += ld;
        }
        (x, log_det)
    }
}
