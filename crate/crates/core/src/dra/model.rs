//! Slimmable conditional autoencoder with feature modulation and hyperprior.

use rand::Rng;

use super::latent::round_half_away;
use super::{LatentGroups, RouteSpec};
use crate::entropy::{GroupParamNets, HyperNetworks};
use crate::numerics::checkpoint::{read_checkpoint, restore_params, write_checkpoint, MODEL_MAGIC};
use crate::numerics::{ConvKind, ConvLayer, Parameter, SeedStream, Stack, Tensor};
use crate::{Error, Result};

/// A layer with per-route channel widths over one shared weight tensor.
pub type SlimmableLayer = ConvLayer;

/// Width of the feature-modulation hidden layers.
pub const FM_HIDDEN: usize = 16;
/// Reference frame used for intra frames.
pub const MID_GRAY: f64 = 0.5;
/// Fixed factor between the encoder trunk output and the latent `y`; the
/// decoder trunk reads `ŷ / LATENT_GAIN`.
pub const LATENT_GAIN: f64 = 8.0;
/// Initial weight scale of the reconstruction head.
const OUTPUT_INIT_SCALE: f64 = 0.1;

const META_ROUTE_SPEC: &str = "meta.route_spec";
const META_SEED: &str = "meta.seed";

#[derive(Clone, Debug)]
pub struct DraModel {
    pub spec: RouteSpec,
    /// Seed of the run that produced the current weights.
    pub seed: u64,
    /// `g_a`: stride-2 convolutions followed by one stride-1 projection onto
    /// the `C_k` latent channels.
    pub encoder: Stack,
    /// `g_s` trunk: stride-1 transposed projection then stride-2 transposed
    /// convolutions back to frame resolution.
    pub decoder: Stack,
    /// Reads `[x_ref, decoder features]` and predicts the residual over `x_ref`.
    pub output: SlimmableLayer,
    /// Feature modulation; selector `j` refines a prefix of `C_j` channels.
    pub fm: Stack,
    pub hyper: HyperNetworks,
    pub group_nets: GroupParamNets,
}

fn check_pair(spec: &RouteSpec, x_t: &Tensor, x_ref: &Tensor) -> Result<()> {
    if x_t.channels() != 1 {
        return Err(Error::shape(format!("frames must have 1 channel, got {}", x_t.channels())));
    }
    x_ref.expect_shape(x_t.shape(), "reference frame")?;
    spec.check_frame_dims(x_t.height(), x_t.width())
}

impl DraModel {
    pub fn new(spec: RouteSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = SeedStream::new(seed).stream("dra.init");
        let mut model = Self::with_rng(spec, &mut rng);
        model.seed = seed;
        Ok(model)
    }

    fn with_rng(spec: RouteSpec, rng: &mut impl Rng) -> Self {
        let hw = &spec.hidden_widths;
        let stages = spec.stages();

        let mut enc = Vec::with_capacity(stages + 1);
        for s in 0..stages {
            let widths = hw.iter().map(|&h| (if s == 0 { 2 } else { h }, h)).collect();
            enc.push(ConvLayer::new(&format!("enc.{s}"), ConvKind::Conv, widths, 3, 2, 1, rng));
        }
        let proj = hw.iter().zip(&spec.latent_channels).map(|(&h, &c)| (h, c)).collect();
        enc.push(ConvLayer::new(&format!("enc.{stages}"), ConvKind::Conv, proj, 3, 1, 1, rng));

        let mut dec = Vec::with_capacity(stages + 1);
        let lift = spec.latent_channels.iter().zip(hw).map(|(&c, &h)| (c, h)).collect();
        dec.push(ConvLayer::new("dec.0", ConvKind::Transposed, lift, 3, 1, 1, rng));
        for s in 0..stages {
            let widths = hw.iter().map(|&h| (h, h)).collect();
            dec.push(ConvLayer::new(&format!("dec.{}", s + 1), ConvKind::Transposed, widths, 4, 2, 1, rng));
        }
        let mut output = ConvLayer::new("out", ConvKind::Conv, hw.iter().map(|&h| (1 + h, 1)).collect(), 3, 1, 1, rng);
        output.scale_weights(OUTPUT_INIT_SCALE);

        let prefixes = &spec.latent_channels[..spec.routes() - 1];
        let mut fm_last = ConvLayer::new("fm.2", ConvKind::Conv, prefixes.iter().map(|&c| (FM_HIDDEN, c)).collect(), 3, 1, 1, rng);
        fm_last.scale_weights(0.0);
        let fm = Stack::new(
            vec![
                ConvLayer::new("fm.0", ConvKind::Conv, prefixes.iter().map(|&c| (c, FM_HIDDEN)).collect(), 3, 1, 1, rng),
                ConvLayer::new("fm.1", ConvKind::Conv, vec![(FM_HIDDEN, FM_HIDDEN); prefixes.len()], 3, 1, 1, rng),
                fm_last,
            ],
            false,
        );

        let hyper = HyperNetworks::new(&spec, rng);
        let group_nets = GroupParamNets::new(&spec, rng);
        DraModel {
            spec,
            seed: 0,
            encoder: Stack::new(enc, false),
            decoder: Stack::new(dec, true),
            output,
            fm,
            hyper,
            group_nets,
        }
    }

    pub fn spec(&self) -> &RouteSpec {
        &self.spec
    }

    /// Encoder input `[x_t, x_ref]`.
    pub fn encoder_input(&self, x_t: &Tensor, x_ref: &Tensor) -> Result<Tensor> {
        check_pair(&self.spec, x_t, x_ref)?;
        Tensor::concat_channels(&[x_t, x_ref])
    }

    /// Unquantized `y^{<=k}` split into groups.
    pub fn encode_latent(&self, x_t: &Tensor, x_ref: &Tensor, k: usize) -> Result<LatentGroups> {
        self.spec.check_route(k)?;
        let y = self.encoder.forward(&self.encoder_input(x_t, x_ref)?, k)?.scale(LATENT_GAIN);
        LatentGroups::split(&y, &self.spec, k)
    }

    /// FM selector for a prefix with `channels` channels.
    pub fn fm_selector(&self, channels: usize) -> Result<usize> {
        let prefixes = &self.spec.latent_channels[..self.spec.routes() - 1];
        prefixes.iter().position(|&c| c == channels).ok_or_else(|| {
            Error::invalid(format!(
                "feature modulation needs a prefix of one of {prefixes:?} channels, got {channels}"
            ))
        })
    }

    /// `FM(prefix)` on a raw channel prefix: `prefix + stack(prefix)`.
    pub fn modulate(&self, prefix: &Tensor) -> Result<Tensor> {
        let sel = self.fm_selector(prefix.channels())?;
        prefix.add(&self.fm.forward(prefix, sel)?)
    }

    /// `FM` applied to groups `0..k-1` (the whole of `prefix`).
    pub fn feature_modulate(&self, prefix: &LatentGroups) -> Result<Tensor> {
        if prefix.groups.is_empty() {
            return Err(Error::invalid("feature modulation needs at least one prefix group"));
        }
        self.modulate(&prefix.full()?)
    }

    /// Coding-time context for group `g`: `round(FM(ŷ^{<=g-1}))`, or `None`
    /// for group 0.
    pub fn coding_context(&self, y_hat: &LatentGroups, g: usize) -> Result<Option<Tensor>> {
        if g == 0 {
            return Ok(None);
        }
        if g > y_hat.groups.len() {
            return Err(Error::invalid(format!("context for group {g} needs groups 0..{g}")));
        }
        let m = self.modulate(&y_hat.concat(g - 1)?)?;
        Ok(Some(m.map(round_half_away)))
    }

    /// Reconstruction `clamp(x_ref + head([x_ref, g_s(ŷ)]), 0, 1)`.
    pub fn decode_frame(&self, y_hat: &LatentGroups, x_ref: &Tensor, k: usize) -> Result<Tensor> {
        self.spec.check_route(k)?;
        if y_hat.groups.len() != k + 1 {
            return Err(Error::invalid(format!(
                "route {k} needs {} latent groups, got {}",
                k + 1,
                y_hat.groups.len()
            )));
        }
        let y = y_hat.full()?;
        let [n, _, h, w] = y.shape();
        let ds = self.spec.downsample_factor;
        x_ref.expect_shape([n, 1, h * ds, w * ds], "reference frame")?;
        let feats = self.decoder.forward(&y.scale(1.0 / LATENT_GAIN), k)?;
        let out = self.output.forward(&Tensor::concat_channels(&[x_ref, &feats])?, k)?;
        Ok(x_ref.zip_map(&out, |r, o| (r + o).clamp(0.0, 1.0))?)
    }

    pub fn params(&self) -> Vec<&Parameter> {
        let mut v = self.encoder.params();
        v.extend(self.decoder.params());
        v.extend(self.output.params());
        v.extend(self.fm.params());
        v.extend(self.hyper.params());
        v.extend(self.group_nets.params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut v = self.encoder.params_mut();
        v.extend(self.decoder.params_mut());
        v.extend(self.output.params_mut());
        v.extend(self.fm.params_mut());
        v.extend(self.hyper.params_mut());
        v.extend(self.group_nets.params_mut());
        v
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Keep only gradients on parameters route `k` reads.
    pub fn mask_grads_to_route(&mut self, k: usize) -> Result<()> {
        self.spec.check_route(k)?;
        for l in self
            .encoder
            .layers
            .iter_mut()
            .chain(self.decoder.layers.iter_mut())
            .chain(self.hyper.enc.layers.iter_mut())
            .chain(std::iter::once(&mut self.output))
        {
            l.mask_grad_to(k)?;
        }
        if k == 0 {
            self.fm.params_mut().into_iter().for_each(|p| p.zero_grad());
        } else {
            for l in &mut self.fm.layers {
                l.mask_grad_to(k - 1)?;
            }
        }
        for net in self.group_nets.nets.iter_mut().skip(k + 1) {
            net.params_mut().into_iter().for_each(|p| p.zero_grad());
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Vec<u8> {
        let meta = self.spec.to_meta();
        let meta = Tensor::from_vec([1, 1, 1, meta.len()], meta).expect("length matches");
        // two 32-bit halves, each exact in an f64
        let seed = Tensor::from_vec([1, 1, 1, 2], vec![(self.seed >> 32) as f64, (self.seed & 0xffff_ffff) as f64]).expect("length matches");
        let mut entries: Vec<(&str, &Tensor)> = vec![(META_ROUTE_SPEC, &meta), (META_SEED, &seed)];
        entries.extend(self.params().into_iter().map(|p| (p.id.as_str(), &p.value)));
        write_checkpoint(MODEL_MAGIC, &entries)
    }

    pub fn from_checkpoint(bytes: &[u8]) -> Result<Self> {
        let entries = read_checkpoint(MODEL_MAGIC, bytes)?;
        let meta = entries
            .iter()
            .find(|(id, _)| id == META_ROUTE_SPEC)
            .ok_or_else(|| Error::Format("checkpoint lacks the route layout".into()))?;
        let spec = RouteSpec::from_meta(meta.1.data())?;
        let seed = entries
            .iter()
            .find(|(id, _)| id == META_SEED)
            .ok_or_else(|| Error::Format("checkpoint lacks the run seed".into()))?;
        let halves = seed.1.data();
        if halves.len() != 2 || halves.iter().any(|h| h.fract() != 0.0 || !(0.0..4294967296.0).contains(h)) {
            return Err(Error::Format("malformed run seed in checkpoint".into()));
        }
        let mut model = DraModel::new(spec, 0)?;
        model.seed = ((halves[0] as u64) << 32) | halves[1] as u64;
        let expected = model.params().len() + 2;
        if entries.len() != expected {
            return Err(Error::Format(format!(
                "checkpoint has {} entries, model layout expects {expected}",
                entries.len()
            )));
        }
        restore_params(&mut model.params_mut(), &entries)?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::conv2d;

    fn random_frame(shape: [usize; 4], rng: &mut impl Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn latent_shape_for_default_layout() {
        let model = DraModel::new(RouteSpec::default(), 1).unwrap();
        let mut rng = SeedStream::new(2).stream("frames");
        let x = random_frame([1, 1, 64, 64], &mut rng);
        let r = random_frame([1, 1, 64, 64], &mut rng);
        let y = model.encode_latent(&x, &r, 3).unwrap();
        assert_eq!(y.groups.len(), 4);
        for g in &y.groups {
            assert_eq!(g.shape(), [1, 6, 8, 8]);
        }
        let again = model.encode_latent(&x, &r, 3).unwrap();
        assert!(y.full().unwrap().bit_eq(&again.full().unwrap()));
    }

    #[test]
    fn indivisible_frame_is_rejected() {
        let model = DraModel::new(RouteSpec::default(), 1).unwrap();
        let x = Tensor::zeros([1, 1, 40, 64]);
        assert!(matches!(model.encode_latent(&x, &x, 0), Err(Error::Shape(_))));
    }

    #[test]
    fn fresh_fm_is_identity_and_rejects_empty_prefix() {
        let model = DraModel::new(RouteSpec::default(), 3).unwrap();
        let mut rng = SeedStream::new(4).stream("prefix");
        for k in 1..4 {
            let c = model.spec.latent_channels[k - 1];
            let p = random_frame([1, c, 4, 4], &mut rng);
            let groups = LatentGroups::split(&p, &model.spec, k - 1).unwrap();
            let m = model.feature_modulate(&groups).unwrap();
            assert!(m.bit_eq(&p));
        }
        let empty = LatentGroups { groups: vec![], quantized: true };
        assert!(model.feature_modulate(&empty).is_err());
    }

    #[test]
    fn widest_output_layer_is_dense_conv() {
        let model = DraModel::new(RouteSpec::default(), 5).unwrap();
        let mut rng = SeedStream::new(6).stream("x");
        let x = random_frame([1, 49, 8, 8], &mut rng);
        let a = model.output.forward(&x, 3).unwrap();
        let b = conv2d(&x, &model.output.weight.value, model.output.bias.value.data(), 1, 1).unwrap();
        assert!(a.bit_eq(&b));
    }

    #[test]
    fn decode_checks_group_count_and_range() {
        let model = DraModel::new(RouteSpec::default(), 7).unwrap();
        let x = Tensor::full([1, 1, 32, 32], 0.5);
        let y = model.encode_latent(&x, &x, 1).unwrap();
        assert!(model.decode_frame(&y, &x, 2).is_err());
        let xh = model.decode_frame(&y, &x, 1).unwrap();
        assert_eq!(xh.shape(), x.shape());
        assert!(xh.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let model = DraModel::new(RouteSpec::default(), 8).unwrap();
        let bytes = model.to_checkpoint();
        let back = DraModel::from_checkpoint(&bytes).unwrap();
        assert_eq!(back.spec, model.spec);
        assert_eq!(back.to_checkpoint(), bytes);
    }

    #[test]
    fn route_mask_keeps_only_the_route_block() {
        let mut model = DraModel::new(RouteSpec::default(), 9).unwrap();
        for p in model.params_mut() {
            p.grad.fill(1.0);
        }
        model.mask_grads_to_route(0).unwrap();
        let g = &model.encoder.layers[0].weight.grad;
        // rows beyond hidden width 12 are masked
        assert_eq!(g.at(11, 0, 0, 0), 1.0);
        assert_eq!(g.at(12, 0, 0, 0), 0.0);
        assert!(model.fm.params().iter().all(|p| p.grad.data().iter().all(|&v| v == 0.0)));
        assert!(model.group_nets.nets[1].params().iter().all(|p| p.grad.sum() == 0.0));
        assert!(model.group_nets.nets[0].params().iter().all(|p| p.grad.sum() > 0.0));
    }
}
