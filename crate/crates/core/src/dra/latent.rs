use rand::Rng;

use super::RouteSpec;
use crate::numerics::Tensor;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuantMode {
    /// Additive uniform noise on `[-0.5, 0.5)`, the training surrogate.
    Noise,
    /// Round half away from zero.
    Round,
}

pub fn round_half_away(v: f64) -> f64 {
    // f64::round breaks ties away from zero; adding +0.0 turns -0.0 into
    // +0.0 so rounded values match decoded integers bit for bit
    v.round() + 0.0
}

pub fn quantize(y: &Tensor, mode: QuantMode, rng: &mut impl Rng) -> Tensor {
    match mode {
        QuantMode::Round => y.map(round_half_away),
        QuantMode::Noise => {
            let mut out = y.clone();
            for v in out.data_mut() {
                *v += rng.random_range(-0.5..0.5);
            }
            out
        }
    }
}

/// Uniform noise tensor on `[-0.5, 0.5)`.
pub fn uniform_noise(shape: [usize; 4], rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-0.5..0.5)).collect()).expect("length matches")
}

/// The latent `y^{<=k}` split into the channel groups owned by routes `0..=k`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentGroups {
    pub groups: Vec<Tensor>,
    pub quantized: bool,
}

impl LatentGroups {
    pub fn split(y: &Tensor, spec: &RouteSpec, k: usize) -> Result<Self> {
        spec.check_route(k)?;
        if y.channels() != spec.latent_channels[k] {
            return Err(Error::shape(format!(
                "latent has {} channels, route {k} expects {}",
                y.channels(),
                spec.latent_channels[k]
            )));
        }
        Ok(LatentGroups {
            groups: y.split_channels(&spec.group_widths(k))?,
            quantized: false,
        })
    }

    pub fn route(&self) -> usize {
        self.groups.len() - 1
    }

    /// Channel concatenation of groups `0..=upto`.
    pub fn concat(&self, upto: usize) -> Result<Tensor> {
        if upto >= self.groups.len() {
            return Err(Error::invalid(format!(
                "group {upto} requested from {} groups",
                self.groups.len()
            )));
        }
        let parts: Vec<&Tensor> = self.groups[..=upto].iter().collect();
        Tensor::concat_channels(&parts)
    }

    pub fn full(&self) -> Result<Tensor> {
        self.concat(self.groups.len() - 1)
    }

    pub fn quantize(&self, mode: QuantMode, rng: &mut impl Rng) -> Self {
        LatentGroups {
            groups: self.groups.iter().map(|g| quantize(g, mode, rng)).collect(),
            quantized: true,
        }
    }

    pub fn is_integral(&self) -> bool {
        self.groups.iter().all(|g| g.data().iter().all(|v| v.fract() == 0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeedStream;

    #[test]
    fn rounding_rule() {
        assert_eq!(round_half_away(1.4), 1.0);
        assert_eq!(round_half_away(-0.5), -1.0);
        assert_eq!(round_half_away(0.5), 1.0);
        assert_eq!(round_half_away(-1.6), -2.0);
    }

    #[test]
    fn round_is_idempotent_and_noise_is_bounded() {
        let mut rng = SeedStream::new(3).stream("q");
        let y = Tensor::from_vec([1, 1, 4, 4], (0..16).map(|i| (i as f64 - 7.3) * 0.77).collect()).unwrap();
        let r = quantize(&y, QuantMode::Round, &mut rng);
        assert_eq!(quantize(&r, QuantMode::Round, &mut rng), r);
        for _ in 0..20 {
            let n = quantize(&y, QuantMode::Noise, &mut rng);
            assert!(n.data().iter().zip(y.data()).all(|(a, b)| (a - b).abs() <= 0.5));
        }
    }

    #[test]
    fn groups_concatenate_back() {
        let spec = RouteSpec::default();
        let y = Tensor::from_vec([1, 18, 2, 2], (0..72).map(f64::from).collect()).unwrap();
        let g = LatentGroups::split(&y, &spec, 2).unwrap();
        assert_eq!(g.groups.len(), 3);
        assert_eq!(g.full().unwrap(), y);
        assert_eq!(g.concat(1).unwrap(), y.slice_channels(0..12).unwrap());
        assert!(LatentGroups::split(&y, &spec, 1).is_err());
    }
}
