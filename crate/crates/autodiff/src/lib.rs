//! Dense `f64` tensors with reverse-mode automatic differentiation.
//!
//! Computations are recorded on a [`Graph`] through [`Var`] handles.
//! [`Graph::backward`] returns gradients as new variables; passing
//! `create_graph = true` records the backward pass itself so the gradients
//! can be differentiated again (needed for gradient penalties).
//!
//! ```
//! use gasp_autodiff::{Graph, Tensor};
//!
//! let g = Graph::new();
//! let x = g.param(Tensor::scalar(2.0));
//! let y = x.mul(x).unwrap().mul(x).unwrap();
//! let dy = g.backward(y, &[x], true).unwrap()[0];
//! assert_eq!(dy.item(), Some(12.0));
//! let d2y = g.backward(dy, &[x], false).unwrap()[0];
//! assert_eq!(d2y.item(), Some(12.0));
//! ```

pub mod check;
mod error;
mod graph;
mod kernels;
pub mod nn;
mod ops;
mod tensor;

pub use error::{Result, TensorError};
pub use graph::{Graph, Var};
pub use ops::{Elementwise, LEAKY_RELU_SLOPE};
pub use tensor::Tensor;

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    ops::sigmoid(x)
}

/// Numerically stable `log(1 + exp(x))`.
pub fn softplus(x: f64) -> f64 {
    ops::softplus(x)
}
