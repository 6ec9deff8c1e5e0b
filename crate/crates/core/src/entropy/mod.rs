//! Hyperprior, channel-group entropy parameters and range coding.

pub mod cdf;
pub mod codec;
pub mod gaussian;
pub mod hyper;
pub mod params;
pub mod prior;
pub mod range;

pub use codec::{decode_latents, encode_latents, entropy_params, predict_group_params, rate_bits, EntropyParams};
pub use cdf::{build_cdf, gaussian_cdf, logistic_cdf, CdfTable};
pub use gaussian::{bin_probability, SCALE_MAX, SCALE_MIN};
pub use hyper::{HyperLatent, HyperNetworks, HYPER_CHANNELS, HYPER_CONTEXT_CHANNELS};
pub use params::{GaussianParams, GroupParamNets};
pub use prior::FactorizedPrior;
pub use range::{rc_decode, rc_encode, RangeDecoder, RangeEncoder};
