//! Masked feed-forward conditioner.
//!
//! Degrees: input `j` (0-based) has degree `j + 1`; hidden units cycle through
//! `1..=d-1` (all zero when `d = 1`); the head of dimension `i` has degree
//! `i + 1` and may only read hidden units of degree `≤ i`. Hence the parameters
//! for dimension `i` depend on `x[..i]` only, and dimension 0 is a function of
//! the biases alone.

use std::ops::Range;

use rand::Rng;

use super::params::ParamStore;
use crate::autodiff::Scalar;

#[derive(Debug, Clone)]
struct MaskedLinear {
    weight: Range<usize>,
    bias: Range<usize>,
    inputs: usize,
    // connections[o] = input indices output `o` may read
    connections: Vec<Vec<usize>>,
}

impl MaskedLinear {
    fn apply<S: Scalar>(&self, params: &[S], x: &[S]) -> Vec<S> {
        let w = &params[self.weight.clone()];
        let b = &params[self.bias.clone()];
        self.connections
            .iter()
            .enumerate()
            .map(|(o, conn)| {
                let row = &w[o * self.inputs..(o + 1) * self.inputs];
                S::sum_products(b[o], conn.iter().map(|&j| (row[j], x[j])))
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct MaskedConditioner {
    dim: usize,
    hidden: usize,
    per_dim: usize,
    layers: [MaskedLinear; 3],
}

impl MaskedConditioner {
    /// Default hidden width: `dim + 10`.
    pub fn default_hidden(dim: usize) -> usize {
        dim + 10
    }

    /// Allocates a conditioner emitting `per_dim` values for each of `dim`
    /// dimensions. Hidden weights are uniform in `±1/√fan_in`; the output head
    /// starts at zero.
    pub fn new<R: Rng>(store: &mut ParamStore, prefix: &str, dim: usize, hidden: usize, per_dim: usize, rng: &mut R) -> Self {
        assert!(dim >= 1 && hidden >= 1 && per_dim >= 1);
        let input_deg: Vec<usize> = (1..=dim).collect();
        let hidden_deg: Vec<usize> = (0..hidden).map(|k| if dim == 1 { 0 } else { k % (dim - 1) + 1 }).collect();
        let output_deg: Vec<usize> = (0..dim * per_dim).map(|o| o / per_dim + 1).collect();

        let conn = |out_deg: &[usize], in_deg: &[usize], strict: bool| -> Vec<Vec<usize>> {
            out_deg
                .iter()
                .map(|&m| {
                    in_deg
                        .iter()
                        .enumerate()
                        .filter(|&(_, &k)| if strict { k < m } else { k <= m })
                        .map(|(j, _)| j)
                        .collect()
                })
                .collect()
        };

        let mut uniform = |store: &mut ParamStore, name: String, shape: &[usize], fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            store.alloc(name, shape, |_| rng.gen_range(-bound..bound))
        };
        let l1 = MaskedLinear {
            weight: uniform(store, format!("{prefix}.w1"), &[hidden, dim], dim),
            bias: uniform(store, format!("{prefix}.b1"), &[hidden], dim),
            inputs: dim,
            connections: conn(&hidden_deg, &input_deg, false),
        };
        let l2 = MaskedLinear {
            weight: uniform(store, format!("{prefix}.w2"), &[hidden, hidden], hidden),
            bias: uniform(store, format!("{prefix}.b2"), &[hidden], hidden),
            inputs: hidden,
            connections: conn(&hidden_deg, &hidden_deg, false),
        };
        let out = dim * per_dim;
        let l3 = MaskedLinear {
            weight: store.alloc(format!("{prefix}.w3"), &[out, hidden], |_| 0.0),
            bias: store.alloc(format!("{prefix}.b3"), &[out], |_| 0.0),
            inputs: hidden,
            connections: conn(&output_deg, &hidden_deg, true),
        };
        Self {
            dim,
            hidden,
            per_dim,
            layers: [l1, l2, l3],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn per_dim(&self) -> usize {
        self.per_dim
    }

    /// Flat outputs; dimension `i` owns `[i·per_dim, (i+1)·per_dim)`.
    pub fn forward<S: Scalar>(&self, params: &[S], x: &[S]) -> Vec<S> {
        debug_assert_eq!(x.len(), self.dim);
        let h1: Vec<S> = self.layers[0].apply(params, x).into_iter().map(S::tanh).collect();
        let h2: Vec<S> = self.layers[1].apply(params, &h1).into_iter().map(S::tanh).collect();
        self.layers[2].apply(params, &h2)
    }

    /// Parameters of dimension `i` only, reading `x[..i]`. Used by sequential
    /// sampling, where later coordinates are not yet known.
    pub fn forward_dim(&self, params: &[f64], x: &[f64], i: usize) -> Vec<f64> {
        // The full pass is cheap at these sizes and entries ≥ i are ignored by masking.
        let out = self.forward(params, x);
        out[i * self.per_dim..(i + 1) * self.per_dim].to_vec()
    }

    /// Every trainable index whose weight is actually read (masked weights excluded).
    pub fn active_indices(&self) -> Vec<usize> {
        let mut idx = Vec::new();
        for layer in &self.layers {
            for (o, conn) in layer.connections.iter().enumerate() {
                idx.extend(conn.iter().map(|&j| layer.weight.start + o * layer.inputs + j));
            }
            idx.extend(layer.bias.clone());
        }
        idx
    }

    /// Full parameter span owned by this conditioner.
    pub fn param_range(&self) -> Range<usize> {
        self.layers[0].weight.start..self.layers[2].bias.end
    }
}
