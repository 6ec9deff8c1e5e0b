//! A frame-level adaptive neural video codec.
//!
//! One slimmable autoencoder exposes `K` nested coding routes. Route `k` reads
//! the channel prefix of every shared weight tensor, so narrower routes cost
//! fewer operations and fewer bits. A rate-control agent estimates the bitrate
//! of every route for the next frame, allocates bits over a sliding window and
//! switches routes to track a target bitrate.
//!
//! Module map:
//!
//! - [`numerics`]: tensors, convolution layers with explicit backward passes,
//!   Adam, finite-difference gradient checks, checkpoints.
//! - [`dra`]: the dynamic-route autoencoder (slimmable layers, feature
//!   modulation, quantization).
//! - [`entropy`]: hyperprior, channel-group parameter prediction, CDF tables
//!   and the range coder.
//! - [`rca`]: block motion, rate estimation, bit allocation and route choice.
//! - [`training`]: joint rate-distortion loss, initial training and
//!   joint-routes optimization.
//! - [`pipeline`]: sequence coding, the bitstream container, metrics and
//!   synthetic data.
//!
//! Runnable walkthroughs live in the crate's `examples/` directory.

pub mod dra;
pub mod entropy;
pub mod error;
pub mod numerics;
pub mod pipeline;
pub mod rca;
pub mod training;

pub use error::{Error, Result};
