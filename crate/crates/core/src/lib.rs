// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod base_dist;
pub mod data;
pub mod error;
pub mod eval_metrics;
pub mod flow_layers;
pub mod flow_model;
pub mod harness;
pub mod special_fn;
pub mod tail_transform;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};
