//! Minimal reverse-mode automatic differentiation over `f64` arrays, with
//! exactly the operations the autoencoders and distillation losses need.

pub mod gradcheck;
mod kernels;
mod params;
mod tape;

pub use params::{glorot_uniform, Adam, Bindings, ParamId, ParamStore, Parameter};
pub use tape::{sigmoid_scalar, BatchStats, Tape, Tensor, Var, LOG_FLOOR};

/// Added to the variance inside the batch-normalization square root.
pub const BN_EPS: f64 = 1e-5;
/// Weight on the old value when blending running statistics.
pub const BN_MOMENTUM: f64 = 0.9;
/// Negative-side slope of every LeakyReLU in the networks.
pub const LEAKY_SLOPE: f64 = 0.3;

#[cfg(test)]
mod tests;
