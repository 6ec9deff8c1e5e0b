//! Per-route rate estimation: a small learned CNN and a trial-encoding oracle.

use std::io::Write;

use rand::Rng;

use super::controller::RateEstimate;
use super::motion::MotionField;
use crate::dra::DraModel;
use crate::numerics::checkpoint::{read_checkpoint, restore_params, write_checkpoint, ESTIMATOR_MAGIC};
use crate::numerics::{ConvKind, ConvLayer, OptimizerState, Parameter, SeedStream, Stack, Tensor};
use crate::pipeline::codec::encode_frame;
use crate::{Error, Result};

/// Side of the square grid the estimator sees.
pub const ESTIMATOR_GRID: usize = 32;
const TRUNK_WIDTH: usize = 16;
const META_ROUTES: &str = "meta.routes";

/// What an estimator may look at for one frame.
pub struct EstimatorInput<'a> {
    pub x_t: &'a Tensor,
    pub x_ref: &'a Tensor,
    pub motion: &'a MotionField,
}

pub trait RateEstimator {
    fn routes(&self) -> usize;
    fn estimate(&mut self, input: &EstimatorInput) -> Result<RateEstimate>;
}

/// Estimator input planes: the frame area-averaged onto a 32x32 grid and the
/// per-block motion magnitude sampled onto the same grid.
pub fn estimator_features(x_t: &Tensor, motion: &MotionField) -> Result<Tensor> {
    let [n, c, h, w] = x_t.shape();
    let g = ESTIMATOR_GRID;
    if n != 1 || c != 1 || h % g != 0 || w % g != 0 {
        return Err(Error::shape(format!(
            "estimator needs one single-channel frame with sides divisible by {g}, got {:?}",
            x_t.shape()
        )));
    }
    if motion.blocks_y * motion.block != h || motion.blocks_x * motion.block != w {
        return Err(Error::shape("motion field does not cover the frame"));
    }
    let (fy, fx) = (h / g, w / g);
    let mut out = Tensor::zeros([1, 2, g, g]);
    let area = (fy * fx) as f64;
    let mags = motion.magnitudes();
    for gy in 0..g {
        for gx in 0..g {
            let mut acc = 0.0;
            for y in gy * fy..(gy + 1) * fy {
                for x in gx * fx..(gx + 1) * fx {
                    acc += x_t.at(0, 0, y, x);
                }
            }
            out.set(0, 0, gy, gx, acc / area);
            let by = gy * motion.blocks_y / g;
            let bx = gx * motion.blocks_x / g;
            out.set(0, 1, gy, gx, mags[by * motion.blocks_x + bx]);
        }
    }
    Ok(out)
}

fn softplus(a: f64) -> f64 {
    if a > 30.0 {
        a
    } else {
        a.exp().ln_1p()
    }
}

fn softplus_inverse(v: f64) -> f64 {
    let v = v.max(1e-6);
    if v > 30.0 {
        v
    } else {
        v.exp_m1().ln()
    }
}

fn sigmoid(a: f64) -> f64 {
    1.0 / (1.0 + (-a).exp())
}

/// Conv feature extractor, global average pooling, one linear head per route
/// and a softplus output.
#[derive(Clone, Debug)]
pub struct EstimatorModel {
    routes: usize,
    pub trunk: Stack,
    pub head: ConvLayer,
}

struct Forward {
    trunk_out: Tensor,
    trace: crate::numerics::StackTrace,
    pooled: Tensor,
    logits: Tensor,
}

impl EstimatorModel {
    pub fn new(routes: usize, seed: u64) -> Result<Self> {
        if routes == 0 {
            return Err(Error::invalid("estimator needs at least one route"));
        }
        let mut rng = SeedStream::new(seed).stream("rca.init");
        Ok(Self::with_rng(routes, &mut rng))
    }

    fn with_rng(routes: usize, rng: &mut impl Rng) -> Self {
        let trunk = Stack::new(
            vec![
                ConvLayer::new("rca.conv.0", ConvKind::Conv, vec![(2, 8)], 3, 2, 1, rng),
                ConvLayer::new("rca.conv.1", ConvKind::Conv, vec![(8, TRUNK_WIDTH)], 3, 2, 1, rng),
            ],
            true,
        );
        let head = ConvLayer::new("rca.fc", ConvKind::Conv, vec![(TRUNK_WIDTH, routes)], 1, 1, 0, rng);
        EstimatorModel { routes, trunk, head }
    }

    pub fn routes(&self) -> usize {
        self.routes
    }

    fn forward_full(&self, features: &Tensor) -> Result<Forward> {
        let (trunk_out, trace) = self.trunk.forward_traced(features, 0)?;
        let [n, c, h, w] = trunk_out.shape();
        let mut pooled = Tensor::zeros([n, c, 1, 1]);
        for s in 0..n {
            for ch in 0..c {
                let m = trunk_out.plane(s, ch).iter().sum::<f64>() / (h * w) as f64;
                pooled.set(s, ch, 0, 0, m);
            }
        }
        let logits = self.head.forward(&pooled, 0)?;
        Ok(Forward {
            trunk_out,
            trace,
            pooled,
            logits,
        })
    }

    /// Predicted bpp, shape `[N, K, 1, 1]`.
    pub fn forward(&self, features: &Tensor) -> Result<Tensor> {
        Ok(self.forward_full(features)?.logits.map(softplus))
    }

    pub fn estimate_rates(&self, x_t: &Tensor, motion: &MotionField) -> Result<RateEstimate> {
        let out = self.forward(&estimator_features(x_t, motion)?)?;
        Ok(RateEstimate(out.data().to_vec()))
    }

    /// Mean relative L1 error over the batch, accumulating gradients when
    /// `backward` is set.
    fn loss(&mut self, features: &Tensor, targets: &[Vec<f64>], backward: bool) -> Result<f64> {
        let f = self.forward_full(features)?;
        let n = features.batch();
        let k = self.routes;
        let norm = (n * k) as f64;
        let mut loss = 0.0;
        let mut d_logits = Tensor::zeros(f.logits.shape());
        for (s, t) in targets.iter().enumerate() {
            for r in 0..k {
                let a = f.logits.at(s, r, 0, 0);
                let pred = softplus(a);
                let truth = t[r];
                loss += (pred - truth).abs() / truth / norm;
                let sign = if pred > truth { 1.0 } else if pred < truth { -1.0 } else { 0.0 };
                d_logits.set(s, r, 0, 0, sign / truth / norm * sigmoid(a));
            }
        }
        if backward {
            let d_pooled = self.head.backward(&f.pooled, &d_logits, 0)?;
            let [_, c, h, w] = f.trunk_out.shape();
            let mut d_trunk = Tensor::zeros(f.trunk_out.shape());
            for s in 0..n {
                for ch in 0..c {
                    let g = d_pooled.at(s, ch, 0, 0) / (h * w) as f64;
                    d_trunk.plane_mut(s, ch).fill(g);
                }
            }
            self.trunk.backward(&f.trace, &d_trunk, 0)?;
        }
        Ok(loss)
    }

    pub fn params(&self) -> Vec<&Parameter> {
        let mut v = self.trunk.params();
        v.extend(self.head.params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut v = self.trunk.params_mut();
        v.extend(self.head.params_mut());
        v
    }

    pub fn to_checkpoint(&self) -> Vec<u8> {
        let meta = Tensor::full([1, 1, 1, 1], self.routes as f64);
        let mut entries: Vec<(&str, &Tensor)> = vec![(META_ROUTES, &meta)];
        entries.extend(self.params().into_iter().map(|p| (p.id.as_str(), &p.value)));
        write_checkpoint(ESTIMATOR_MAGIC, &entries)
    }

    pub fn from_checkpoint(bytes: &[u8]) -> Result<Self> {
        let entries = read_checkpoint(ESTIMATOR_MAGIC, bytes)?;
        let routes = entries
            .iter()
            .find(|(id, _)| id == META_ROUTES)
            .map(|(_, t)| t.data()[0] as usize)
            .ok_or_else(|| Error::Format("estimator checkpoint lacks its route count".into()))?;
        let mut model = EstimatorModel::new(routes, 0)?;
        restore_params(&mut model.params_mut(), &entries)?;
        Ok(model)
    }
}

/// Learned estimator bound to a route count.
pub struct LearnedEstimator {
    pub model: EstimatorModel,
}

impl LearnedEstimator {
    /// Rejects a model trained for a different number of routes.
    pub fn new(model: EstimatorModel, routes: usize) -> Result<Self> {
        if model.routes() != routes {
            return Err(Error::invalid(format!(
                "estimator predicts {} routes, codec has {routes}",
                model.routes()
            )));
        }
        Ok(LearnedEstimator { model })
    }
}

impl RateEstimator for LearnedEstimator {
    fn routes(&self) -> usize {
        self.model.routes()
    }

    fn estimate(&mut self, input: &EstimatorInput) -> Result<RateEstimate> {
        self.model.estimate_rates(input.x_t, input.motion)
    }
}

/// `estimate_rates` with the route-count check against the codec.
pub fn estimate_rates(x_t: &Tensor, motion: &MotionField, model: &EstimatorModel, routes: usize) -> Result<RateEstimate> {
    if model.routes() != routes {
        return Err(Error::invalid(format!(
            "estimator predicts {} routes, codec has {routes}",
            model.routes()
        )));
    }
    model.estimate_rates(x_t, motion)
}

/// Trial-encodes every route and reports the exact coded bpp.
pub struct OracleEstimator<'m> {
    pub model: &'m DraModel,
}

impl RateEstimator for OracleEstimator<'_> {
    fn routes(&self) -> usize {
        self.model.spec.routes()
    }

    fn estimate(&mut self, input: &EstimatorInput) -> Result<RateEstimate> {
        true_rates(self.model, input.x_t, input.x_ref).map(RateEstimate)
    }
}

/// Coded bpp of `x_t` through every route.
pub fn true_rates(model: &DraModel, x_t: &Tensor, x_ref: &Tensor) -> Result<Vec<f64>> {
    (0..model.spec.routes())
        .map(|k| encode_frame(model, x_t, x_ref, k).map(|e| e.bpp()))
        .collect()
}

/// One training example for the estimator.
#[derive(Clone, Debug)]
pub struct RateSample {
    pub frame_id: String,
    /// `[1, 2, 32, 32]` estimator input.
    pub features: Tensor,
    pub true_bpp: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct EstimatorTrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for EstimatorTrainConfig {
    fn default() -> Self {
        EstimatorTrainConfig {
            steps: 600,
            lr: 3e-3,
            seed: 0,
        }
    }
}

/// Full-batch Adam on the mean relative L1 error, with the learning rate
/// decayed linearly to zero. Returns the model and the loss before each step.
pub fn train_estimator(samples: &[RateSample], config: &EstimatorTrainConfig) -> Result<(EstimatorModel, Vec<f64>)> {
    let first = samples.first().ok_or_else(|| Error::EmptyDataset("no rate-estimator samples".into()))?;
    let routes = first.true_bpp.len();
    for s in samples {
        if s.true_bpp.len() != routes {
            return Err(Error::invalid(format!("sample {} has {} routes, expected {routes}", s.frame_id, s.true_bpp.len())));
        }
        if s.true_bpp.iter().any(|&r| !(r > 0.0)) {
            return Err(Error::invalid(format!("sample {} has a non-positive rate", s.frame_id)));
        }
    }
    let mut model = EstimatorModel::new(routes, config.seed)?;
    // start each head at the mean target so training refines the spread
    for r in 0..routes {
        let mean = samples.iter().map(|s| s.true_bpp[r]).sum::<f64>() / samples.len() as f64;
        model.head.bias.value.data_mut()[r] = softplus_inverse(mean);
    }
    let feats: Vec<&Tensor> = samples.iter().map(|s| &s.features).collect();
    let features = Tensor::stack_batch(&feats)?;
    let targets: Vec<Vec<f64>> = samples.iter().map(|s| s.true_bpp.clone()).collect();
    let mut opt = OptimizerState::new(config.lr);
    let mut history = Vec::with_capacity(config.steps + 1);
    for step in 0..config.steps {
        for p in model.params_mut() {
            p.zero_grad();
        }
        let loss = model.loss(&features, &targets, true)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("estimator loss at step {step}")));
        }
        history.push(loss);
        opt.lr = config.lr * (1.0 - step as f64 / config.steps as f64);
        opt.adam_step(&mut model.params_mut())?;
    }
    history.push(model.loss(&features, &targets, false)?);
    Ok((model, history))
}

/// Mean relative error per route of `model` on `samples`.
pub fn relative_errors(model: &EstimatorModel, samples: &[RateSample]) -> Result<Vec<f64>> {
    let k = model.routes();
    let mut acc = vec![0.0; k];
    for s in samples {
        let pred = model.forward(&s.features)?;
        for r in 0..k {
            acc[r] += (pred.data()[r] - s.true_bpp[r]).abs() / s.true_bpp[r];
        }
    }
    Ok(acc.into_iter().map(|a| a / samples.len().max(1) as f64).collect())
}

/// CSV with columns `frame_id, route, true_bpp`.
pub fn write_samples_csv<W: Write>(samples: &[RateSample], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["frame_id", "route", "true_bpp"]).map_err(csv_err)?;
    for s in samples {
        for (r, b) in s.true_bpp.iter().enumerate() {
            w.write_record([s.frame_id.as_str(), &r.to_string(), &format!("{b}")]).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}
