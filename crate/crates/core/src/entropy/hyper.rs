//! Hyperprior analysis/synthesis networks.

use rand::Rng;

use super::prior::FactorizedPrior;
use crate::dra::latent::round_half_away;
use crate::dra::{LatentGroups, RouteSpec};
use crate::numerics::{ConvKind, ConvLayer, Parameter, Stack, Tensor};
use crate::Result;

/// Channels of the hyper-latent `z`.
pub const HYPER_CHANNELS: usize = 8;
/// Channels of the context the hyper-synthesis network hands to the group
/// parameter predictors.
pub const HYPER_CONTEXT_CHANNELS: usize = 16;

/// Quantized hyper-latent of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperLatent {
    pub z_hat: Tensor,
}

#[derive(Clone, Debug)]
pub struct HyperNetworks {
    /// `h_a`: its first layer reads the `C_k` channels of route `k`.
    pub enc: Stack,
    /// `h_s`: fixed width, selector 0.
    pub dec: Stack,
    pub prior: FactorizedPrior,
}

impl HyperNetworks {
    pub fn new(spec: &RouteSpec, rng: &mut impl Rng) -> Self {
        let k = spec.routes();
        let first: Vec<_> = spec.latent_channels.iter().map(|&c| (c, HYPER_CHANNELS)).collect();
        let enc = Stack::new(
            vec![
                ConvLayer::new("hyper.enc.0", ConvKind::Conv, first, 3, 2, 1, rng),
                ConvLayer::new("hyper.enc.1", ConvKind::Conv, vec![(HYPER_CHANNELS, HYPER_CHANNELS); k], 3, 2, 1, rng),
            ],
            false,
        );
        let dec = Stack::new(
            vec![
                ConvLayer::new(
                    "hyper.dec.0",
                    ConvKind::Transposed,
                    vec![(HYPER_CHANNELS, HYPER_CONTEXT_CHANNELS)],
                    4,
                    2,
                    1,
                    rng,
                ),
                ConvLayer::new(
                    "hyper.dec.1",
                    ConvKind::Transposed,
                    vec![(HYPER_CONTEXT_CHANNELS, HYPER_CONTEXT_CHANNELS)],
                    4,
                    2,
                    1,
                    rng,
                ),
            ],
            false,
        );
        HyperNetworks {
            enc,
            dec,
            prior: FactorizedPrior::new(HYPER_CHANNELS),
        }
    }

    /// `z = h_a(y^{<=k})`, before quantization.
    pub fn analysis(&self, y: &Tensor, k: usize) -> Result<Tensor> {
        self.enc.forward(y, k)
    }

    /// `ẑ = round(h_a(y^{<=k}))` for unquantized latent groups.
    pub fn hyper_encode(&self, y: &LatentGroups) -> Result<HyperLatent> {
        let z = self.analysis(&y.full()?, y.route())?;
        Ok(HyperLatent {
            z_hat: z.map(round_half_away),
        })
    }

    /// Context `h_s(ẑ)` aligned with the latent grid.
    pub fn hyper_decode(&self, z_hat: &Tensor) -> Result<Tensor> {
        self.dec.forward(z_hat, 0)
    }

    pub fn params(&self) -> Vec<&Parameter> {
        let mut v = self.enc.params();
        v.extend(self.dec.params());
        v.extend(self.prior.params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut v = self.enc.params_mut();
        v.extend(self.dec.params_mut());
        v.extend(self.prior.params_mut());
        v
    }
}
