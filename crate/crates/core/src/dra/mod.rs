//! Dynamic-route autoencoder: K nested routes over shared slimmable weights.

pub mod latent;
pub mod model;
pub mod pass;
pub mod spec;

pub use latent::{quantize, round_half_away, LatentGroups, QuantMode};
pub use model::{DraModel, SlimmableLayer, LATENT_GAIN, MID_GRAY};
pub use pass::{route_pass, RouteLoss, RouteNoise};
pub use spec::RouteSpec;
