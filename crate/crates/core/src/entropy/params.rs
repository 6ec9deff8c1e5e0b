//! Per-group Gaussian parameter predictors (the channel-wise autoregression).

use rand::Rng;

use super::gaussian::clamp_scale;
use super::hyper::HYPER_CONTEXT_CHANNELS;
use crate::dra::RouteSpec;
use crate::numerics::{ConvKind, ConvLayer, Parameter, Stack, Tensor};
use crate::{Error, Result};

pub const PARAM_HIDDEN: usize = 16;

/// Mean and scale for every element of one latent group.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianParams {
    pub mean: Tensor,
    pub scale: Tensor,
}

impl GaussianParams {
    /// Split raw network output into the mean half and the clamped
    /// `exp(raw)` scale half.
    pub fn from_raw(raw: &Tensor) -> Result<Self> {
        let c = raw.channels();
        if c % 2 != 0 {
            return Err(Error::shape(format!("parameter head has odd channel count {c}")));
        }
        let parts = raw.split_channels(&[c / 2, c / 2])?;
        Ok(GaussianParams {
            mean: parts[0].clone(),
            scale: parts[1].map(|r| clamp_scale(r.exp())),
        })
    }
}

#[derive(Clone, Debug)]
pub struct GroupParamNets {
    pub nets: Vec<Stack>,
    context_widths: Vec<usize>,
}

impl GroupParamNets {
    pub fn new(spec: &RouteSpec, rng: &mut impl Rng) -> Self {
        let mut nets = Vec::with_capacity(spec.routes());
        let mut context_widths = Vec::with_capacity(spec.routes());
        for g in 0..spec.routes() {
            let ctx = if g == 0 { 0 } else { spec.latent_channels[g - 1] };
            let out = 2 * spec.group_width(g);
            let input = HYPER_CONTEXT_CHANNELS + ctx;
            let mut last = ConvLayer::new(&format!("group.{g}.2"), ConvKind::Conv, vec![(PARAM_HIDDEN, out)], 3, 1, 1, rng);
            last.scale_weights(0.1);
            nets.push(Stack::new(
                vec![
                    ConvLayer::new(&format!("group.{g}.0"), ConvKind::Conv, vec![(input, PARAM_HIDDEN)], 3, 1, 1, rng),
                    ConvLayer::new(&format!("group.{g}.1"), ConvKind::Conv, vec![(PARAM_HIDDEN, PARAM_HIDDEN)], 3, 1, 1, rng),
                    last,
                ],
                false,
            ));
            context_widths.push(ctx);
        }
        GroupParamNets { nets, context_widths }
    }

    pub fn groups(&self) -> usize {
        self.nets.len()
    }

    /// Network input for group `g`: the hyper context, followed by the
    /// modulated prefix context for `g > 0`.
    pub fn input(&self, g: usize, context: Option<&Tensor>, hyper_ctx: &Tensor) -> Result<Tensor> {
        if g >= self.nets.len() {
            return Err(Error::invalid(format!("group {g} out of range ({} groups)", self.nets.len())));
        }
        match (g, context) {
            (0, None) => Ok(hyper_ctx.clone()),
            (0, Some(_)) => Err(Error::invalid("group 0 has no autoregressive context")),
            (_, None) => Err(Error::invalid(format!("group {g} needs the context of groups 0..{g}"))),
            (_, Some(c)) => {
                if c.channels() != self.context_widths[g] {
                    return Err(Error::shape(format!(
                        "group {g} context has {} channels, expected {}",
                        c.channels(),
                        self.context_widths[g]
                    )));
                }
                Tensor::concat_channels(&[hyper_ctx, c])
            }
        }
    }

    pub fn raw(&self, g: usize, context: Option<&Tensor>, hyper_ctx: &Tensor) -> Result<Tensor> {
        let input = self.input(g, context, hyper_ctx)?;
        self.nets[g].forward(&input, 0)
    }

    pub fn predict(&self, g: usize, context: Option<&Tensor>, hyper_ctx: &Tensor) -> Result<GaussianParams> {
        GaussianParams::from_raw(&self.raw(g, context, hyper_ctx)?)
    }

    pub fn params(&self) -> Vec<&Parameter> {
        self.nets.iter().flat_map(|n| n.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        self.nets.iter_mut().flat_map(|n| n.params_mut()).collect()
    }
}
