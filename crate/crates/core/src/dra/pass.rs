//! Differentiable route pass used for training: noise-quantized latents,
//! floored rate and clamped reconstruction, with an explicit backward pass.

use rand::Rng;

use super::latent::uniform_noise;
use super::{DraModel, LATENT_GAIN};
use crate::entropy::gaussian::{bin_cost, SCALE_MAX, SCALE_MIN};
use crate::entropy::HYPER_CONTEXT_CHANNELS;
use crate::numerics::{StackTrace, Tensor};
use crate::{Error, Result};

/// Quantization noise for one route pass.
#[derive(Clone, Debug)]
pub struct RouteNoise {
    /// Added to `y`.
    pub y: Tensor,
    /// Added to `z`.
    pub z: Tensor,
    /// Added to the modulated context of group `g`, at index `g - 1`.
    pub context: Vec<Tensor>,
}

impl RouteNoise {
    fn build(model: &DraModel, n: usize, height: usize, width: usize, k: usize, mut make: impl FnMut([usize; 4]) -> Tensor) -> Self {
        let spec = &model.spec;
        let (h, w) = (height / spec.downsample_factor, width / spec.downsample_factor);
        let hz = model.hyper.enc.layers.len();
        let (zh, zw) = (h >> hz, w >> hz);
        RouteNoise {
            y: make([n, spec.latent_channels[k], h, w]),
            z: make([n, crate::entropy::HYPER_CHANNELS, zh, zw]),
            context: (1..=k).map(|g| make([n, spec.latent_channels[g - 1], h, w])).collect(),
        }
    }

    pub fn sample(model: &DraModel, n: usize, height: usize, width: usize, k: usize, rng: &mut impl Rng) -> Self {
        Self::build(model, n, height, width, k, |s| uniform_noise(s, rng))
    }

    pub fn zero(model: &DraModel, n: usize, height: usize, width: usize, k: usize) -> Self {
        Self::build(model, n, height, width, k, Tensor::zeros)
    }
}

/// Rate and distortion of one route on one batch.
#[derive(Clone, Debug)]
pub struct RouteLoss {
    /// Bits per pixel, latent plus hyper-latent.
    pub rate: f64,
    /// Mean squared error on `[0, 1]` pixels.
    pub distortion: f64,
    pub latent_bits: f64,
    pub hyper_bits: f64,
    pub reconstruction: Tensor,
}

struct GroupTrace {
    fm: Option<StackTrace>,
    net: StackTrace,
    d_value: Tensor,
    d_raw: Tensor,
}

/// Forward route `k` on `(x_t, x_ref)`; with `lambda = Some(λ)` also
/// accumulate the gradient of `R + λ·D` into the model's parameters.
pub fn route_pass(
    model: &mut DraModel,
    x_t: &Tensor,
    x_ref: &Tensor,
    k: usize,
    noise: &RouteNoise,
    lambda: Option<f64>,
) -> Result<RouteLoss> {
    model.spec.check_route(k)?;
    let spec = model.spec.clone();
    let [n, _, height, width] = x_t.shape();
    let pixels = (n * height * width) as f64;
    let rate_weight = if lambda.is_some() { 1.0 / pixels } else { 0.0 };

    let x_in = model.encoder_input(x_t, x_ref)?;
    let (y, enc_tr) = model.encoder.forward_traced(&x_in, k)?;
    let y = y.scale(LATENT_GAIN);
    let y_t = y.add(&noise.y)?;
    let (z, ha_tr) = model.hyper.enc.forward_traced(&y, k)?;
    let z_t = z.add(&noise.z)?;
    let (ctx, hs_tr) = model.hyper.dec.forward_traced(&z_t, 0)?;
    let (hyper_bits, dz_prior) = model.hyper.prior.cost_and_backward(&z_t, rate_weight);

    let widths = spec.group_widths(k);
    let groups = y_t.split_channels(&widths)?;
    let mut latent_bits = 0.0;
    let mut traces = Vec::with_capacity(k + 1);
    for (g, group) in groups.iter().enumerate() {
        let fm = if g > 0 {
            let prefix = y_t.slice_channels(0..spec.latent_channels[g - 1])?;
            let (r, tr) = model.fm.forward_traced(&prefix, g - 1)?;
            let c = prefix.add(&r)?.add(&noise.context[g - 1])?;
            Some((c, tr))
        } else {
            None
        };
        let input = model.group_nets.input(g, fm.as_ref().map(|f| &f.0), &ctx)?;
        let (raw, net) = model.group_nets.nets[g].forward_traced(&input, 0)?;
        let [_, gc, gh, gw] = group.shape();
        let plane = gh * gw;
        let mut d_value = Tensor::zeros(group.shape());
        let mut d_raw = Tensor::zeros(raw.shape());
        for s in 0..n {
            for c in 0..gc {
                for i in 0..plane {
                    let vi = (s * gc + c) * plane + i;
                    let mi = (s * 2 * gc + c) * plane + i;
                    let si = (s * 2 * gc + gc + c) * plane + i;
                    let mean = raw.data()[mi];
                    let unclamped = raw.data()[si].exp();
                    let scale = unclamped.clamp(SCALE_MIN, SCALE_MAX);
                    let cost = bin_cost(group.data()[vi], mean, scale);
                    latent_bits += cost.bits;
                    d_value.data_mut()[vi] = cost.d_value * rate_weight;
                    d_raw.data_mut()[mi] = cost.d_mean * rate_weight;
                    if unclamped == scale {
                        // d exp(r)/dr = exp(r)
                        d_raw.data_mut()[si] = cost.d_scale * scale * rate_weight;
                    }
                }
            }
        }
        traces.push(GroupTrace {
            fm: fm.map(|(_, tr)| tr),
            net,
            d_value,
            d_raw,
        });
    }

    let (feats, dec_tr) = model.decoder.forward_traced(&y_t.scale(1.0 / LATENT_GAIN), k)?;
    let out_in = Tensor::concat_channels(&[x_ref, &feats])?;
    let out = model.output.forward(&out_in, k)?;
    let pre = x_ref.add(&out)?;
    let x_hat = pre.map(|v| v.clamp(0.0, 1.0));
    let distortion = x_hat.mse(x_t)?;
    let rate = (latent_bits + hyper_bits) / pixels;
    if !rate.is_finite() || !distortion.is_finite() {
        return Err(Error::NonFinite(format!(
            "route {k}: rate {rate}, distortion {distortion}"
        )));
    }
    let loss = RouteLoss {
        rate,
        distortion,
        latent_bits,
        hyper_bits,
        reconstruction: x_hat,
    };
    let Some(lambda) = lambda else {
        return Ok(loss);
    };

    // distortion path
    let scale = 2.0 * lambda / x_t.len() as f64;
    let mut d_pre = Tensor::zeros(pre.shape());
    for (i, d) in d_pre.data_mut().iter_mut().enumerate() {
        let p = pre.data()[i];
        if (0.0..=1.0).contains(&p) {
            *d = scale * (p - x_t.data()[i]);
        }
    }
    let d_out_in = model.output.backward(&out_in, &d_pre, k)?;
    let d_feats = d_out_in.slice_channels(1..d_out_in.channels())?;
    let mut d_y = model.decoder.backward(&dec_tr, &d_feats, k)?.scale(1.0 / LATENT_GAIN);

    // rate path through the group predictors and feature modulation
    let group_grads: Vec<&Tensor> = traces.iter().map(|t| &t.d_value).collect();
    d_y.add_assign(&Tensor::concat_channels(&group_grads)?)?;
    let mut d_ctx = Tensor::zeros(ctx.shape());
    for (g, t) in traces.iter().enumerate().rev() {
        let d_input = model.group_nets.nets[g].backward(&t.net, &t.d_raw, 0)?;
        let c_prev = d_input.channels() - HYPER_CONTEXT_CHANNELS;
        let parts = d_input.split_channels(&[HYPER_CONTEXT_CHANNELS, c_prev])?;
        d_ctx.add_assign(&parts[0])?;
        if let Some(fm_tr) = &t.fm {
            let d_m = &parts[1];
            let mut d_p = model.fm.backward(fm_tr, d_m, g - 1)?;
            d_p.add_assign(d_m)?;
            let rest = Tensor::zeros([n, d_y.channels() - c_prev, d_y.height(), d_y.width()]);
            d_y.add_assign(&Tensor::concat_channels(&[&d_p, &rest])?)?;
        }
    }

    // hyperprior
    let mut d_z = model.hyper.dec.backward(&hs_tr, &d_ctx, 0)?;
    d_z.add_assign(&dz_prior.scale(rate_weight))?;
    let d_y_hyper = model.hyper.enc.backward(&ha_tr, &d_z, k)?;
    d_y.add_assign(&d_y_hyper)?;
    model.encoder.backward(&enc_tr, &d_y.scale(LATENT_GAIN), k)?;
    Ok(loss)
}
