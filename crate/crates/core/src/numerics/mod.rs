//! Deterministic tensor math with explicit forward/backward pairs.

pub mod activation;
pub mod checkpoint;
pub mod conv;
pub mod gradcheck;
pub mod layer;
mod param;
pub mod rng;
mod tensor;

pub use activation::{leaky_relu, leaky_relu_backward, LEAKY_SLOPE};
pub use conv::{conv2d, conv2d_backward, tconv2d, tconv2d_backward, ConvGrads};
pub use gradcheck::grad_check;
pub use layer::{ConvKind, ConvLayer, Stack, StackTrace};
pub use param::{OptimizerState, Parameter};
pub use rng::SeedStream;
pub use tensor::Tensor;
