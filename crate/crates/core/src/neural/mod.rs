//! Minimal reverse-mode autodiff over `f64` tensors plus the layers the
//! encoders and decoders are built from.
//!
//! Forward code records nodes on a [`Tape`]; trainable [`Tensor`]s are
//! registered with [`Tape::param`] and receive their gradients back through
//! [`Module::collect_grads`] after [`Tape::backward`].

mod gemm;
mod layers;
pub mod ops;
mod tape;
mod tensor;

pub use layers::{BatchNorm, Conv2d, Linear, Mode, Module};
pub(crate) use layers::join;
pub use ops::sigmoid_scalar;
pub use tape::{CustomOp, Tape, Values, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
