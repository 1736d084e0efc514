//! Minimal tensor/layer toolkit with hand-derived backpropagation.
//!
//! Everything trains in f32; the same layers instantiate in f64 so the
//! finite-difference checker can verify each backward pass tightly.

pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod optim;
pub mod tensor;

pub use gradcheck::finite_diff_check;
pub use layers::{
    Conv2d, Dense, GlobalAvgPool, Layer, ParamMut, ParamRef, PlainBlock, RSoftmax, Relu,
    SplitAttention, rsoftmax_backward, rsoftmax_forward,
};
pub use loss::{softmax_cross_entropy, softmax_row};
pub use optim::{sgd_step, Sgd};
pub use tensor::{Scalar, Tensor};
