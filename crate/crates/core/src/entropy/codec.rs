//! Frame-level latent coding: a hyper chunk followed by one chunk per
//! latent group, each group conditioned on the groups before it.

use super::cdf::{gaussian_cdf, logistic_cdf, CdfTable};
use super::params::GaussianParams;
use super::prior::FactorizedPrior;
use super::range::{rc_decode, rc_encode};
use crate::dra::{DraModel, LatentGroups};
use crate::numerics::Tensor;
use crate::{Error, Result};

/// Bits spent on a value sent through the escape path.
pub const ESCAPE_RAW_BITS: f64 = 16.0;

/// Entropy parameters of one coded frame.
#[derive(Clone, Debug)]
pub struct EntropyParams {
    pub hyper_ctx: Tensor,
    pub groups: Vec<GaussianParams>,
}

/// Parameters of group `g` given the already-quantized groups `0..g` and the
/// hyper context.
pub fn predict_group_params(model: &DraModel, g: usize, prior_groups: &LatentGroups, hyper_ctx: &Tensor) -> Result<GaussianParams> {
    if g >= model.spec.routes() {
        return Err(Error::invalid(format!("group {g} out of range (K = {})", model.spec.routes())));
    }
    if prior_groups.groups.len() != g {
        return Err(Error::invalid(format!(
            "group {g} conditions on {g} earlier groups, got {}",
            prior_groups.groups.len()
        )));
    }
    let ctx = model.coding_context(prior_groups, g)?;
    model.group_nets.predict(g, ctx.as_ref(), hyper_ctx)
}

/// Parameters for every group of a quantized latent, exactly as the decoder
/// will reconstruct them.
pub fn entropy_params(model: &DraModel, y_hat: &LatentGroups, z_hat: &Tensor) -> Result<EntropyParams> {
    let hyper_ctx = model.hyper.hyper_decode(z_hat)?;
    let mut groups = Vec::with_capacity(y_hat.groups.len());
    for g in 0..y_hat.groups.len() {
        let prefix = LatentGroups {
            groups: y_hat.groups[..g].to_vec(),
            quantized: true,
        };
        groups.push(predict_group_params(model, g, &prefix, &hyper_ctx)?);
    }
    Ok(EntropyParams { hyper_ctx, groups })
}

fn group_tables(params: &GaussianParams) -> Vec<CdfTable> {
    params
        .mean
        .data()
        .iter()
        .zip(params.scale.data())
        .map(|(&m, &s)| gaussian_cdf(m, s))
        .collect()
}

fn hyper_tables(prior: &FactorizedPrior, shape: [usize; 4]) -> Vec<CdfTable> {
    let [n, c, h, w] = shape;
    let per_channel: Vec<CdfTable> = (0..c).map(|ch| logistic_cdf(prior.location(ch), prior.scale(ch))).collect();
    let mut out = Vec::with_capacity(n * c * h * w);
    for _ in 0..n {
        for t in &per_channel {
            out.extend(std::iter::repeat_n(t, h * w).cloned());
        }
    }
    out
}

fn as_symbols(t: &Tensor) -> Result<Vec<i32>> {
    t.data()
        .iter()
        .map(|&v| {
            if v.fract() != 0.0 || v.abs() > f64::from(i32::MAX) {
                Err(Error::invalid(format!("value {v} is not a codable integer")))
            } else {
                Ok(v as i32)
            }
        })
        .collect()
}

/// Ideal cost in bits of a quantized latent and hyper-latent under the
/// coder's own tables.
///
/// Each value costs `-log2` of the quantized mass the range coder assigns
/// it; values outside the table support cost the escape symbol plus 16 raw
/// bits. This tracks the coded length up to the coder's flush overhead,
/// including far-tail values whose continuous bin mass lies below the
/// table's one-count floor.
pub fn rate_bits(y_hat: &LatentGroups, params: &[GaussianParams], z_hat: &Tensor, prior: &FactorizedPrior) -> Result<f64> {
    if !y_hat.is_integral() || z_hat.data().iter().any(|v| v.fract() != 0.0) {
        return Err(Error::invalid("rate_bits needs quantized latents"));
    }
    if params.len() != y_hat.groups.len() {
        return Err(Error::invalid(format!("{} parameter sets for {} groups", params.len(), y_hat.groups.len())));
    }
    let mut bits = 0.0;
    for (group, p) in y_hat.groups.iter().zip(params) {
        group.expect_shape(p.mean.shape(), "group parameters")?;
        for ((&y, &m), &s) in group.data().iter().zip(p.mean.data()).zip(p.scale.data()) {
            bits += table_bits(&gaussian_cdf(m, s), y, m, s)?;
        }
    }
    let [n, c, h, w] = z_hat.shape();
    for ch in 0..c {
        let (loc, scale) = (prior.location(ch), prior.scale(ch));
        let t = logistic_cdf(loc, scale);
        for s in 0..n {
            for &z in z_hat.plane(s, ch).iter().take(h * w) {
                bits += table_bits(&t, z, loc, scale)?;
            }
        }
    }
    Ok(bits)
}

fn table_bits(t: &CdfTable, v: f64, mean: f64, scale: f64) -> Result<f64> {
    if !mean.is_finite() || !scale.is_finite() || v.abs() > f64::from(i16::MAX) {
        return Err(Error::ZeroProbability { symbol: v as i64, mean, scale });
    }
    let v = v as i32;
    let escape = if t.index_of(v).is_none() { ESCAPE_RAW_BITS } else { 0.0 };
    Ok(-t.value_probability(v).log2() + escape)
}

/// Range-code a quantized frame latent. Returns the hyper chunk followed by
/// one chunk per group.
pub fn encode_latents(model: &DraModel, y_hat: &LatentGroups, z_hat: &Tensor) -> Result<Vec<Vec<u8>>> {
    if z_hat.batch() != 1 {
        return Err(Error::invalid("latent coding works on one frame at a time"));
    }
    let mut chunks = Vec::with_capacity(y_hat.groups.len() + 1);
    chunks.push(rc_encode(&as_symbols(z_hat)?, &hyper_tables(&model.hyper.prior, z_hat.shape()))?);
    let params = entropy_params(model, y_hat, z_hat)?;
    for (group, p) in y_hat.groups.iter().zip(&params.groups) {
        chunks.push(rc_encode(&as_symbols(group)?, &group_tables(p))?);
    }
    Ok(chunks)
}

/// Decode a frame latent from its chunks; route `k = chunks.len() - 2`.
/// `latent_hw` is the latent grid size. Group `g` reads only the hyper chunk
/// and chunks `0..=g`.
pub fn decode_latents<C: AsRef<[u8]>>(model: &DraModel, chunks: &[C], latent_hw: (usize, usize)) -> Result<(LatentGroups, Tensor)> {
    if chunks.len() < 2 {
        return Err(Error::Format(format!("frame needs a hyper chunk and at least one group chunk, got {} chunks", chunks.len())));
    }
    let k = chunks.len() - 2;
    model.spec.check_route(k)?;
    let (h, w) = latent_hw;
    let factor = 1 << model.hyper.enc.layers.len();
    if h % factor != 0 || w % factor != 0 {
        return Err(Error::shape(format!("latent grid {h}x{w} not divisible by {factor}")));
    }
    let z_shape = [1, super::HYPER_CHANNELS, h / factor, w / factor];
    let z: Vec<f64> = rc_decode(chunks[0].as_ref(), &hyper_tables(&model.hyper.prior, z_shape))?
        .into_iter()
        .map(f64::from)
        .collect();
    let z_hat = Tensor::from_vec(z_shape, z)?;
    let hyper_ctx = model.hyper.hyper_decode(&z_hat)?;
    let mut y_hat = LatentGroups {
        groups: Vec::with_capacity(k + 1),
        quantized: true,
    };
    for g in 0..=k {
        let p = predict_group_params(model, g, &y_hat, &hyper_ctx)?;
        let values = rc_decode(chunks[g + 1].as_ref(), &group_tables(&p))?;
        let values = values.into_iter().map(f64::from).collect();
        y_hat.groups.push(Tensor::from_vec(p.mean.shape(), values)?);
    }
    Ok((y_hat, z_hat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dra::RouteSpec;
    use crate::numerics::SeedStream;
    use rand::Rng;

    fn coded_frame(seed: u64, k: usize) -> (DraModel, LatentGroups, Tensor) {
        let model = DraModel::new(RouteSpec::default(), seed).unwrap();
        let mut rng = SeedStream::new(seed).stream("frame");
        let x = Tensor::from_vec([1, 1, 32, 32], (0..1024).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
        let r = Tensor::full([1, 1, 32, 32], 0.5);
        let y = model.encode_latent(&x, &r, k).unwrap();
        let z_hat = model.hyper.hyper_encode(&y).unwrap().z_hat;
        let y_hat = y.quantize(crate::dra::QuantMode::Round, &mut rng);
        (model, y_hat, z_hat)
    }

    #[test]
    fn latents_round_trip_for_every_route() {
        for k in 0..4 {
            let (model, y_hat, z_hat) = coded_frame(k as u64 + 1, k);
            let chunks = encode_latents(&model, &y_hat, &z_hat).unwrap();
            assert_eq!(chunks.len(), k + 2);
            let (back, z_back) = decode_latents(&model, &chunks, (4, 4)).unwrap();
            assert_eq!(back, y_hat);
            assert!(z_back.bit_eq(&z_hat));
        }
    }

    #[test]
    fn truncated_stream_still_decodes_its_prefix() {
        let (model, y_hat, z_hat) = coded_frame(9, 3);
        let chunks = encode_latents(&model, &y_hat, &z_hat).unwrap();
        for g in 0..4 {
            let (prefix, _) = decode_latents(&model, &chunks[..g + 2], (4, 4)).unwrap();
            assert_eq!(prefix.groups[..], y_hat.groups[..=g]);
        }
    }

    #[test]
    fn rate_bits_tracks_coded_length() {
        let (model, y_hat, z_hat) = coded_frame(11, 3);
        let params = entropy_params(&model, &y_hat, &z_hat).unwrap();
        let bits = rate_bits(&y_hat, &params.groups, &z_hat, &model.hyper.prior).unwrap();
        let coded: usize = encode_latents(&model, &y_hat, &z_hat).unwrap().iter().map(|c| c.len() * 8).sum();
        assert!((coded as f64 - bits).abs() <= 0.02 * bits + 64.0, "coded {coded} ideal {bits}");
    }

    #[test]
    fn group_zero_params_ignore_everything_but_the_hyper_context() {
        let (model, y_hat, z_hat) = coded_frame(12, 2);
        let ctx = model.hyper.hyper_decode(&z_hat).unwrap();
        let empty = LatentGroups { groups: vec![], quantized: true };
        let a = predict_group_params(&model, 0, &empty, &ctx).unwrap();
        let b = entropy_params(&model, &y_hat, &z_hat).unwrap();
        assert!(a.mean.bit_eq(&b.groups[0].mean));
        assert!(predict_group_params(&model, 4, &empty, &ctx).is_err());
    }
}
