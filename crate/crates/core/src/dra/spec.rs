use crate::{Error, Result};

/// Route layout of the slimmable autoencoder.
///
/// Route `k` emits `latent_channels[k]` latent channels and uses
/// `hidden_widths[k]` channels in every internal layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RouteSpec {
    pub latent_channels: Vec<usize>,
    pub hidden_widths: Vec<usize>,
    pub downsample_factor: usize,
}

impl Default for RouteSpec {
    /// Desk-scale layout: four routes, 6-channel latent groups.
    fn default() -> Self {
        RouteSpec {
            latent_channels: vec![6, 12, 18, 24],
            hidden_widths: vec![12, 24, 36, 48],
            downsample_factor: 8,
        }
    }
}

impl RouteSpec {
    /// The full-width layout with `(24, 48, 72, 96)` latent channels.
    pub fn full_scale() -> Self {
        RouteSpec {
            latent_channels: vec![24, 48, 72, 96],
            hidden_widths: vec![48, 96, 144, 192],
            downsample_factor: 8,
        }
    }

    pub fn new(latent_channels: Vec<usize>, hidden_widths: Vec<usize>, downsample_factor: usize) -> Result<Self> {
        let spec = RouteSpec {
            latent_channels,
            hidden_widths,
            downsample_factor,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.latent_channels.len();
        if k < 2 {
            return Err(Error::invalid(format!("need at least 2 routes, got {k}")));
        }
        if self.hidden_widths.len() != k {
            return Err(Error::invalid(format!(
                "{} hidden widths for {k} routes",
                self.hidden_widths.len()
            )));
        }
        let increasing = |v: &[usize]| v[0] > 0 && v.windows(2).all(|w| w[0] < w[1]);
        if !increasing(&self.latent_channels) {
            return Err(Error::invalid("latent channels must be positive and strictly increasing"));
        }
        if !increasing(&self.hidden_widths) {
            return Err(Error::invalid("hidden widths must be positive and strictly increasing"));
        }
        let ds = self.downsample_factor;
        if ds < 2 || !ds.is_power_of_two() || ds > 64 {
            return Err(Error::invalid(format!("downsample factor {ds} must be a power of two in [2, 64]")));
        }
        if k > u8::MAX as usize || self.latent_channels[k - 1] > u16::MAX as usize {
            return Err(Error::invalid("route layout too large for the bitstream header"));
        }
        Ok(())
    }

    pub fn routes(&self) -> usize {
        self.latent_channels.len()
    }

    pub fn top_route(&self) -> usize {
        self.routes() - 1
    }

    /// Number of stride-2 stages in the encoder (and decoder).
    pub fn stages(&self) -> usize {
        self.downsample_factor.trailing_zeros() as usize
    }

    /// Channels of latent group `g`: `C_g - C_{g-1}`.
    pub fn group_width(&self, g: usize) -> usize {
        let prev = if g == 0 { 0 } else { self.latent_channels[g - 1] };
        self.latent_channels[g] - prev
    }

    pub fn group_widths(&self, k: usize) -> Vec<usize> {
        (0..=k).map(|g| self.group_width(g)).collect()
    }

    pub fn check_route(&self, k: usize) -> Result<()> {
        if k >= self.routes() {
            return Err(Error::invalid(format!("route {k} out of range (K = {})", self.routes())));
        }
        Ok(())
    }

    /// Frames must divide into whole latent pixels, and latents into whole
    /// hyper-latent pixels (two more halvings).
    pub fn frame_multiple(&self) -> usize {
        self.downsample_factor * 4
    }

    pub fn check_frame_dims(&self, height: usize, width: usize) -> Result<()> {
        let m = self.frame_multiple();
        if height == 0 || width == 0 || height % m != 0 || width % m != 0 {
            return Err(Error::shape(format!(
                "frame {width}x{height} must be a non-empty multiple of {m} in both dimensions \
                 (downsample factor {} times the hyperprior's 4)",
                self.downsample_factor
            )));
        }
        Ok(())
    }

    /// Values recorded in checkpoints so a model can be rebuilt from one.
    pub fn to_meta(&self) -> Vec<f64> {
        let mut v = vec![self.routes() as f64, self.downsample_factor as f64];
        v.extend(self.latent_channels.iter().map(|&c| c as f64));
        v.extend(self.hidden_widths.iter().map(|&c| c as f64));
        v
    }

    pub fn from_meta(v: &[f64]) -> Result<Self> {
        let bad = || Error::Format("malformed route spec in checkpoint".into());
        if v.len() < 2 {
            return Err(bad());
        }
        let k = v[0] as usize;
        if v.len() != 2 + 2 * k {
            return Err(bad());
        }
        let ints = |s: &[f64]| s.iter().map(|&x| x as usize).collect::<Vec<_>>();
        RouteSpec::new(ints(&v[2..2 + k]), ints(&v[2 + k..]), v[1] as usize)
    }
}
