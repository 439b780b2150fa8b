//! Invertible layers.
//!
//! `forward` maps the base side to the data side (`z → x`) and is sequential
//! over coordinates for autoregressive layers. `inverse` maps `x → z` in one
//! conditioner pass and is the direction used for density evaluation. Both
//! return the log-absolute-determinant of the map they compute.

pub mod affine;
pub mod conditioner;
pub mod lu;
pub mod params;
pub mod rqs;
pub mod tail;

pub use affine::{affine_forward, affine_inverse, AffineLayer};
pub use conditioner::MaskedConditioner;
pub use lu::LuLayer;
pub use params::{ParamBlock, ParamStore};
pub use rqs::{rqs_forward, rqs_inverse, RqsLayer, SplineKnots};
pub use tail::{TailLayer, TailSource};

use crate::autodiff::Scalar;

#[derive(Debug, Clone)]
pub enum Layer {
    Lu(LuLayer),
    Rqs(RqsLayer),
    Affine(AffineLayer),
    Tail(TailLayer),
}

impl Layer {
    pub fn dim(&self) -> usize {
        match self {
            Layer::Lu(l) => l.dim(),
            Layer::Rqs(l) => l.dim(),
            Layer::Affine(l) => l.dim(),
            Layer::Tail(l) => l.dim(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Layer::Lu(_) => "lu",
            Layer::Rqs(_) => "rqs",
            Layer::Affine(_) => "affine",
            Layer::Tail(l) if l.is_marginal() => "tail-marginal",
            Layer::Tail(_) => "tail",
        }
    }

    /// `x → (z, ln|det ∂z/∂x|)`.
    pub fn inverse<S: Scalar>(&self, params: &[S], x: &[S]) -> (Vec<S>, S) {
        match self {
            Layer::Lu(l) => l.inverse(params, x),
            Layer::Rqs(l) => l.inverse(params, x),
            Layer::Affine(l) => l.inverse(params, x),
            Layer::Tail(l) => l.inverse(params, x),
        }
    }

    /// `z → (x, ln|det ∂x/∂z|)`.
    pub fn forward(&self, params: &[f64], z: &[f64]) -> (Vec<f64>, f64) {
        match self {
            Layer::Lu(l) => l.forward(params, z),
            Layer::Rqs(l) => l.forward(params, z),
            Layer::Affine(l) => l.forward(params, z),
            Layer::Tail(l) => l.forward(params, z),
        }
    }
}
