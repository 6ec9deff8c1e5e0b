//! Per-channel factorized logistic prior for the hyper-latent.

use std::f64::consts::LN_2;

use super::gaussian::LIKELIHOOD_FLOOR;
use crate::numerics::{Parameter, Tensor};

/// Bounds on the logistic scale `exp(log_scale)`.
pub const PRIOR_SCALE_MIN: f64 = 0.04;
pub const PRIOR_SCALE_MAX: f64 = 64.0;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn sigmoid_slope(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 - s)
}

/// Mass of the unit bin centred on `z` under a logistic(loc, scale).
pub fn logistic_bin_probability(z: f64, loc: f64, scale: f64) -> f64 {
    let a = (z - loc - 0.5) / scale;
    let b = (z - loc + 0.5) / scale;
    if a > 0.0 {
        sigmoid(-a) - sigmoid(-b)
    } else {
        sigmoid(b) - sigmoid(a)
    }
}

#[derive(Clone, Debug)]
pub struct FactorizedPrior {
    pub loc: Parameter,
    pub log_scale: Parameter,
}

impl FactorizedPrior {
    pub fn new(channels: usize) -> Self {
        FactorizedPrior {
            loc: Parameter::new("hyper.prior.loc", Tensor::zeros([1, channels, 1, 1])),
            log_scale: Parameter::new("hyper.prior.log_scale", Tensor::zeros([1, channels, 1, 1])),
        }
    }

    pub fn channels(&self) -> usize {
        self.loc.value.channels()
    }

    pub fn location(&self, c: usize) -> f64 {
        self.loc.value.data()[c]
    }

    fn raw_scale(&self, c: usize) -> f64 {
        self.log_scale.value.data()[c].exp()
    }

    pub fn scale(&self, c: usize) -> f64 {
        self.raw_scale(c).clamp(PRIOR_SCALE_MIN, PRIOR_SCALE_MAX)
    }

    pub fn probability(&self, z: f64, c: usize) -> f64 {
        logistic_bin_probability(z, self.location(c), self.scale(c))
    }

    /// Floored bits of `z` (noisy or integer) and the gradient with respect to
    /// `z`; prior-parameter gradients are scaled by `weight` and accumulated.
    pub fn cost_and_backward(&mut self, z: &Tensor, weight: f64) -> (f64, Tensor) {
        let [n, c, h, w] = z.shape();
        let mut dz = Tensor::zeros(z.shape());
        let mut bits = 0.0;
        for ch in 0..c {
            let loc = self.location(ch);
            let raw = self.raw_scale(ch);
            let scale = raw.clamp(PRIOR_SCALE_MIN, PRIOR_SCALE_MAX);
            let scale_live = raw == scale;
            let mut d_loc = 0.0;
            let mut d_ls = 0.0;
            for s in 0..n {
                for i in 0..h * w {
                    let idx = (s * c + ch) * h * w + i;
                    let v = z.data()[idx];
                    let p = logistic_bin_probability(v, loc, scale);
                    if p <= LIKELIHOOD_FLOOR {
                        bits += -LIKELIHOOD_FLOOR.log2();
                        continue;
                    }
                    bits += -p.log2();
                    let a = (v - loc - 0.5) / scale;
                    let b = (v - loc + 0.5) / scale;
                    let (sa, sb) = (sigmoid_slope(a), sigmoid_slope(b));
                    let k = -1.0 / (p * LN_2);
                    let dp_dz = (sb - sa) / scale;
                    dz.data_mut()[idx] = k * dp_dz;
                    d_loc += -k * dp_dz;
                    if scale_live {
                        // d scale / d log_scale = scale
                        d_ls += k * -(b * sb - a * sa);
                    }
                }
            }
            self.loc.grad.data_mut()[ch] += weight * d_loc;
            self.log_scale.grad.data_mut()[ch] += weight * d_ls;
        }
        (bits, dz)
    }

    pub fn params(&self) -> [&Parameter; 2] {
        [&self.loc, &self.log_scale]
    }

    pub fn params_mut(&mut self) -> [&mut Parameter; 2] {
        [&mut self.loc, &mut self.log_scale]
    }
}
