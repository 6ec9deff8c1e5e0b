//! Coding of a single frame against a given reference.

use crate::dra::{DraModel, QuantMode};
use crate::entropy::{decode_latents, encode_latents};
use crate::numerics::{SeedStream, Tensor};
use crate::Result;

/// One frame coded through one route.
#[derive(Clone, Debug)]
pub struct EncodedFrame {
    pub route: usize,
    /// Hyper chunk, then one chunk per latent group.
    pub chunks: Vec<Vec<u8>>,
    /// What the decoder will reconstruct from `chunks`.
    pub reconstruction: Tensor,
}

impl EncodedFrame {
    /// Payload bits, length prefixes excluded.
    pub fn bits(&self) -> usize {
        payload_bits(&self.chunks)
    }

    pub fn bpp(&self) -> f64 {
        let [_, _, h, w] = self.reconstruction.shape();
        self.bits() as f64 / (h * w) as f64
    }
}

pub fn payload_bits<C: AsRef<[u8]>>(chunks: &[C]) -> usize {
    chunks.iter().map(|c| c.as_ref().len() * 8).sum()
}

/// Encode `x_t` through route `k` conditioned on `x_ref`, and reconstruct it
/// exactly as a decoder would.
pub fn encode_frame(model: &DraModel, x_t: &Tensor, x_ref: &Tensor, k: usize) -> Result<EncodedFrame> {
    let y = model.encode_latent(x_t, x_ref, k)?;
    let z_hat = model.hyper.hyper_encode(&y)?.z_hat;
    // round mode draws nothing from the stream
    let y_hat = y.quantize(QuantMode::Round, &mut SeedStream::new(0).stream("unused"));
    let chunks = encode_latents(model, &y_hat, &z_hat)?;
    let reconstruction = model.decode_frame(&y_hat, x_ref, k)?;
    Ok(EncodedFrame {
        route: k,
        chunks,
        reconstruction,
    })
}

/// Reconstruct a frame from its chunks; the route is implied by the chunk count.
pub fn decode_frame_chunks<C: AsRef<[u8]>>(model: &DraModel, chunks: &[C], x_ref: &Tensor) -> Result<Tensor> {
    let ds = model.spec.downsample_factor;
    let (h, w) = (x_ref.height() / ds, x_ref.width() / ds);
    let (y_hat, _) = decode_latents(model, chunks, (h, w))?;
    model.decode_frame(&y_hat, x_ref, y_hat.route())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dra::{RouteSpec, MID_GRAY};
    use rand::Rng;

    #[test]
    fn decoder_matches_encoder_reconstruction_bitwise() {
        let model = DraModel::new(RouteSpec::default(), 21).unwrap();
        let mut rng = SeedStream::new(22).stream("frame");
        let x = Tensor::from_vec([1, 1, 32, 64], (0..2048).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
        let gray = Tensor::full(x.shape(), MID_GRAY);
        for k in 0..4 {
            let enc = encode_frame(&model, &x, &gray, k).unwrap();
            let dec = decode_frame_chunks(&model, &enc.chunks, &gray).unwrap();
            assert!(dec.bit_eq(&enc.reconstruction));
            assert_eq!(enc.route, k);
        }
    }
}
