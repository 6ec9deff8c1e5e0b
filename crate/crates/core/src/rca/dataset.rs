//! Training samples for the rate estimator, gathered by coding sequences.

use rand::Rng;

use super::estimator::{estimator_features, true_rates, RateSample};
use super::motion::{block_motion, BLOCK_SIZE, SEARCH_RANGE};
use crate::dra::{DraModel, MID_GRAY};
use crate::numerics::{SeedStream, Tensor};
use crate::pipeline::codec::encode_frame;
use crate::{Error, Result};

/// Code each sequence with a random route per P-frame, and for every P-frame
/// record the coded bpp of all routes against the reference actually in use.
/// Intra frames (every `gop`-th) are coded at the top route and yield no
/// sample.
pub fn collect_samples(model: &DraModel, sequences: &[Vec<Tensor>], gop: usize, seed: u64) -> Result<Vec<RateSample>> {
    if gop == 0 {
        return Err(Error::invalid("GoP length must be positive"));
    }
    let k = model.spec.routes();
    let mut samples = Vec::new();
    for (si, frames) in sequences.iter().enumerate() {
        let mut rng = SeedStream::new(seed).indexed("rca.routes", si as u64);
        let mut reference: Option<Tensor> = None;
        for (t, x) in frames.iter().enumerate() {
            let intra = t % gop == 0;
            let x_ref = match (&reference, intra) {
                (Some(r), false) => r.clone(),
                _ => Tensor::full(x.shape(), MID_GRAY),
            };
            let route = if intra {
                k - 1
            } else {
                let motion = block_motion(x, &x_ref, BLOCK_SIZE, SEARCH_RANGE)?;
                samples.push(RateSample {
                    frame_id: format!("{si}:{t}"),
                    features: estimator_features(x, &motion)?,
                    true_bpp: true_rates(model, x, &x_ref)?,
                });
                rng.random_range(0..k)
            };
            reference = Some(encode_frame(model, x, &x_ref, route)?.reconstruction);
        }
    }
    Ok(samples)
}
