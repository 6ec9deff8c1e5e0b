//! Joint rate-distortion loss over all routes, validation points and slopes.

use rand::Rng;

use super::data::{pair_reference, Batch};
use super::LambdaSchedule;
use crate::dra::{route_pass, DraModel, QuantMode, RouteNoise};
use crate::entropy::{entropy_params, rate_bits};
use crate::numerics::{SeedStream, Tensor};
use crate::{Error, Result};

/// Rate and distortion of one route on the validation set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RDPoint {
    /// Mean bits per pixel.
    pub rate: f64,
    /// Mean squared error on `[0, 1]` pixels.
    pub distortion: f64,
    pub route: usize,
}

impl RDPoint {
    pub fn new(rate: f64, distortion: f64, route: usize) -> Result<Self> {
        if !(rate > 0.0) || !rate.is_finite() || !(distortion >= 0.0) || !distortion.is_finite() {
            return Err(Error::invalid(format!("route {route}: invalid RD point (R = {rate}, D = {distortion})")));
        }
        Ok(RDPoint { rate, distortion, route })
    }

    /// PSNR in dB of the mean distortion.
    pub fn psnr(&self) -> f64 {
        10.0 * (1.0 / self.distortion).log10()
    }
}

/// Chord slope `(D_low − D_high) / (R_low − R_high)`.
pub fn slope(p_low: &RDPoint, p_high: &RDPoint) -> Result<f64> {
    if p_low.rate == p_high.rate {
        return Err(Error::invalid(format!(
            "routes {} and {} share rate {}; slope undefined",
            p_low.route, p_high.route, p_low.rate
        )));
    }
    Ok((p_low.distortion - p_high.distortion) / (p_low.rate - p_high.rate))
}

/// Value of the summed loss on one batch.
#[derive(Clone, Debug)]
pub struct RdLoss {
    pub loss: f64,
    /// `(R_i, D_i)` per route.
    pub per_route: Vec<(f64, f64)>,
}

/// `Σ_i R_i + λ_i·D_i` over every route with noise-quantized latents. With
/// `backward` the gradient is accumulated into the model.
pub fn rd_loss(model: &mut DraModel, batch: &Batch, schedule: &LambdaSchedule, rng: &mut impl Rng, backward: bool) -> Result<RdLoss> {
    let k = model.spec.routes();
    if schedule.routes() != k {
        return Err(Error::invalid(format!("schedule has {} lambdas for {k} routes", schedule.routes())));
    }
    let [n, _, h, w] = batch.x_t.shape();
    let mut loss = 0.0;
    let mut per_route = Vec::with_capacity(k);
    for (i, &lambda) in schedule.lambdas.iter().enumerate() {
        let noise = RouteNoise::sample(model, n, h, w, i, rng);
        let l = route_pass(model, &batch.x_t, &batch.x_ref, i, &noise, backward.then_some(lambda)).map_err(|e| match e {
            Error::NonFinite(m) => Error::NonFinite(format!("batch {}: {m}", batch.id)),
            other => other,
        })?;
        loss += l.rate + lambda * l.distortion;
        per_route.push((l.rate, l.distortion));
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("batch {}: loss {loss}", batch.id)));
    }
    Ok(RdLoss { loss, per_route })
}

/// Mean rate and distortion of every route over a validation set.
///
/// Each frame is coded against the previous original frame, the first frame
/// of a sequence against mid-gray. Latents are rounded and the rate is the
/// model's ideal code length. Sums run over sequences, then frames, in order.
pub fn evaluate_routes(model: &DraModel, validation: &[Vec<Tensor>]) -> Result<Vec<RDPoint>> {
    let frames: usize = validation.iter().map(Vec::len).sum();
    if frames == 0 {
        return Err(Error::EmptyDataset("validation set has no frames".into()));
    }
    let k = model.spec.routes();
    let mut bits = vec![0.0; k];
    let mut mse = vec![0.0; k];
    let mut pixels = 0usize;
    let mut unused = SeedStream::new(0).stream("unused");
    for seq in validation {
        for t in 0..seq.len() {
            let x = &seq[t];
            let x_ref = pair_reference(seq, t);
            pixels += x.height() * x.width();
            for route in 0..k {
                let y = model.encode_latent(x, &x_ref, route)?;
                let z_hat = model.hyper.hyper_encode(&y)?.z_hat;
                let y_hat = y.quantize(QuantMode::Round, &mut unused);
                let params = entropy_params(model, &y_hat, &z_hat)?;
                bits[route] += rate_bits(&y_hat, &params.groups, &z_hat, &model.hyper.prior)?;
                mse[route] += model.decode_frame(&y_hat, &x_ref, route)?.mse(x)?;
            }
        }
    }
    (0..k)
        .map(|r| RDPoint::new(bits[r] / pixels as f64, mse[r] / frames as f64, r))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dra::RouteSpec;
    use crate::pipeline::synth::{gen_synthetic, MotionProfile};

    fn point(r: f64, d: f64) -> RDPoint {
        RDPoint::new(r, d, 0).unwrap()
    }

    #[test]
    fn slope_examples() {
        assert_eq!(slope(&point(1.0, 4.0), &point(2.0, 2.0)).unwrap(), -2.0);
        assert_eq!(slope(&point(2.0, 2.0), &point(1.0, 4.0)).unwrap(), -2.0);
        assert_eq!(slope(&point(1.0, 3.0), &point(2.0, 3.0)).unwrap(), 0.0);
        assert!(slope(&point(1.0, 3.0), &point(1.0, 2.0)).is_err());
        assert!(RDPoint::new(0.0, 1.0, 0).is_err());
    }

    fn batch() -> Batch {
        let seq = &gen_synthetic(4, 1, 2, 32, 32, MotionProfile::Mixed).unwrap()[0];
        Batch {
            x_t: seq[1].clone(),
            x_ref: seq[0].clone(),
            id: 0,
        }
    }

    #[test]
    fn loss_is_linear_in_each_lambda() {
        let mut model = DraModel::new(RouteSpec::default(), 1).unwrap();
        let b = batch();
        let eval = |model: &mut DraModel, l: Vec<f64>| {
            let s = LambdaSchedule::new(l, 0.5).unwrap();
            rd_loss(model, &b, &s, &mut SeedStream::new(2).stream("noise"), false).unwrap()
        };
        let base = eval(&mut model, vec![1.0, 2.0, 3.0, 4.0]);
        let doubled = eval(&mut model, vec![1.0, 2.0, 6.0, 6.0]);
        let d2 = base.per_route[2].1;
        let d3 = base.per_route[3].1;
        assert!((doubled.loss - base.loss - 3.0 * d2 - 2.0 * d3).abs() < 1e-9);
        let tiny = eval(&mut model, vec![1e-300; 4]);
        let rates: f64 = tiny.per_route.iter().map(|p| p.0).sum();
        assert!((tiny.loss - rates).abs() < 1e-12);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let model = DraModel::new(RouteSpec::default(), 3).unwrap();
        let val = gen_synthetic(5, 2, 2, 32, 32, MotionProfile::Mixed).unwrap();
        let a = evaluate_routes(&model, &val).unwrap();
        assert_eq!(a, evaluate_routes(&model, &val).unwrap());
        assert_eq!(a.len(), 4);
        assert!(evaluate_routes(&model, &[]).is_err());
    }
}
