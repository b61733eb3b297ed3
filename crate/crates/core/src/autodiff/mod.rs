//! A small reverse-mode automatic differentiation engine over dense tensors.
//!
//! Every backward rule is written in terms of differentiable ops, which is
//! what makes gradient-norm penalties (a gradient of a gradient) possible.

mod float;
pub mod kernels;
mod tensor;
mod var;

pub use float::Float;
pub use kernels::{ConvGeom, ResamplePlan};
pub use tensor::{numel, Tensor};
pub use var::{grad, grad_with_seed, Var};
