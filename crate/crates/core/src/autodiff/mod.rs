//! Dense reverse-mode differentiation over rank-2 `f64` tensors.
//!
//! A [`Tape`] records every primitive application in evaluation order;
//! [`Tape::backward`] replays it in reverse from a scalar output.

mod gumbel;
mod tape;
mod tensor;

pub use gumbel::{gumbel_noise, gumbel_softmax, gumbel_softmax_with_noise, sample_category, sample_gumbel};
pub use tape::{capacity_ratio, sigmoid, softmax, Axis, Gradients, SparseMap, Tape, Var};
pub use tensor::Tensor;
