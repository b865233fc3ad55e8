//! Minimal dense layer toolkit with hand-derived backward passes.
//!
//! Everything runs in f64 and is deterministic: there is no dropout and
//! parameter initialisation is a pure function of a 64-bit seed.

mod activation;
mod conv;
mod gradcheck;
mod linear;
mod param;
mod tensor;

pub use activation::{relu, relu_backward, sigmoid, sigmoid_backward, sigmoid_scalar, tanh, tanh_backward};
pub use conv::{conv1d_backward, conv1d_forward, Conv1d};
pub use gradcheck::grad_check;
pub use linear::{linear_backward, linear_forward, Linear};
pub use param::{sgd_step, Initializer, Param};
pub use tensor::Tensor;
