//! Training configuration, read from a flat `key = value` file.
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `seed` | 1 | seed of every random stream in the run |
//! | `iterations` | 200 | iterations `N` per initial-training phase |
//! | `jro_iterations` | `iterations` | fine-tuning iterations per JRO step |
//! | `batch_size` | 4 | pairs per iteration |
//! | `crop` | 32 | side of the square training crops |
//! | `lr` | 1e-4 | Adam learning rate of initial training |
//! | `jro_lr` | `lr` | Adam learning rate of JRO and post-training steps |
//! | `latent_channels` | 6,12,18,24 | `C_0 .. C_{K-1}` |
//! | `hidden_widths` | 12,24,36,48 | per-route hidden widths |
//! | `downsample_factor` | 8 | latent stride |
//! | `lambda_top` | 3251.25 | `λ_{K-1}`; every route starts here unless `lambdas` is set |
//! | `lambdas` | | explicit `λ_0 .. λ_{K-1}` |
//! | `kappa` | 0.7 | JRO decay coefficient |
//! | `jro_cap` | 8 | inner-loop cap per route |
//! | `post_train_rounds` | 3 | decay rounds on `λ_0` after JRO |
//! | `stop_rule` | magnitude | `magnitude` or `literal` diverging-point test |
//! | `validate_every` | 0 | validation cadence in iterations during initial training; 0 = phase ends only |
//! | `checkpoint_every` | 0 | checkpoint cadence in iterations; 0 = none |
//! | `checkpoint_dir` | | where cadence checkpoints go |
//! | `train_data` | | directory of training sequences |
//! | `val_data` | | directory of validation sequences |
//! | `synthetic_sequences` | 16 | generated training sequences when `train_data` is unset |
//! | `synthetic_val_sequences` | 8 | generated validation sequences when `val_data` is unset |
//! | `synthetic_frames` | 16 | frames per generated sequence |
//! | `synthetic_size` | 64x64 | generated frame size |

use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;

use super::data::TrainingSet;
use super::LambdaSchedule;
use crate::dra::RouteSpec;
use crate::numerics::SeedStream;
use crate::pipeline::config::KeyValues;
use crate::pipeline::frame::read_dataset;
use crate::pipeline::synth::{gen_synthetic, MotionProfile};
use crate::{Error, Result};

/// `λ_{K-1}` used when the configuration names none.
pub const DEFAULT_LAMBDA_TOP: f64 = 0.05 * 255.0 * 255.0;
pub const DEFAULT_KAPPA: f64 = 0.7;

const KEYS: &[&str] = &[
    "seed",
    "iterations",
    "jro_iterations",
    "batch_size",
    "crop",
    "lr",
    "jro_lr",
    "latent_channels",
    "hidden_widths",
    "downsample_factor",
    "lambda_top",
    "lambdas",
    "kappa",
    "jro_cap",
    "post_train_rounds",
    "stop_rule",
    "validate_every",
    "checkpoint_every",
    "checkpoint_dir",
    "train_data",
    "val_data",
    "synthetic_sequences",
    "synthetic_val_sequences",
    "synthetic_frames",
    "synthetic_size",
];

/// Diverging-point test of the JRO inner loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopRule {
    /// Stop once `|ξ|` no longer shrinks and validation `R_k` fell.
    Magnitude,
    /// `ξ < ξ_pre and R < R_pre` with `R_pre` held at its initial 0.
    Literal,
}

impl FromStr for StopRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "magnitude" => Ok(StopRule::Magnitude),
            "literal" => Ok(StopRule::Literal),
            _ => Err(Error::invalid(format!("unknown stop rule {s:?}; use magnitude or literal"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub iterations: usize,
    pub jro_iterations: usize,
    pub batch_size: usize,
    pub crop: usize,
    pub lr: f64,
    pub jro_lr: f64,
    pub route_spec: RouteSpec,
    pub schedule: LambdaSchedule,
    pub jro_cap: usize,
    pub post_train_rounds: usize,
    pub stop_rule: StopRule,
    pub validate_every: usize,
    pub checkpoint_every: usize,
    pub checkpoint_dir: Option<PathBuf>,
    pub train_data: Option<PathBuf>,
    pub val_data: Option<PathBuf>,
    pub synthetic_sequences: usize,
    pub synthetic_val_sequences: usize,
    pub synthetic_frames: usize,
    pub synthetic_size: (usize, usize),
}

impl Default for TrainConfig {
    fn default() -> Self {
        let spec = RouteSpec::default();
        TrainConfig {
            seed: 1,
            iterations: 200,
            jro_iterations: 200,
            batch_size: 4,
            crop: 32,
            lr: 1e-4,
            jro_lr: 1e-4,
            schedule: LambdaSchedule::uniform(spec.routes(), DEFAULT_LAMBDA_TOP, DEFAULT_KAPPA).expect("valid defaults"),
            route_spec: spec,
            jro_cap: 8,
            post_train_rounds: 3,
            stop_rule: StopRule::Magnitude,
            validate_every: 0,
            checkpoint_every: 0,
            checkpoint_dir: None,
            train_data: None,
            val_data: None,
            synthetic_sequences: 16,
            synthetic_val_sequences: 8,
            synthetic_frames: 16,
            synthetic_size: (64, 64),
        }
    }
}

/// Parse `WxH`.
pub fn parse_size(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::invalid(format!("bad size {s:?}; expected WxH"));
    let (w, h) = s.split_once('x').ok_or_else(bad)?;
    Ok((w.trim().parse().map_err(|_| bad())?, h.trim().parse().map_err(|_| bad())?))
}

impl TrainConfig {
    /// Parse a configuration file body. Relative data paths resolve against
    /// `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let kv = KeyValues::parse(text, KEYS)?;
        let d = TrainConfig::default();
        let iterations = kv.get("iterations")?.unwrap_or(d.iterations);
        let latent = kv.list("latent_channels")?.unwrap_or(d.route_spec.latent_channels.clone());
        let hidden = kv.list("hidden_widths")?.unwrap_or(d.route_spec.hidden_widths.clone());
        let route_spec = RouteSpec::new(latent, hidden, kv.get("downsample_factor")?.unwrap_or(d.route_spec.downsample_factor))?;
        let kappa = kv.get("kappa")?.unwrap_or(DEFAULT_KAPPA);
        let schedule = match (kv.list::<f64>("lambdas")?, kv.get::<f64>("lambda_top")?) {
            (Some(_), Some(_)) => return Err(Error::invalid("give either lambdas or lambda_top, not both")),
            (Some(l), None) => LambdaSchedule::new(l, kappa)?,
            (None, top) => LambdaSchedule::uniform(route_spec.routes(), top.unwrap_or(DEFAULT_LAMBDA_TOP), kappa)?,
        };
        let lr = kv.get("lr")?.unwrap_or(d.lr);
        let path = |key: &str| kv.raw(key).map(|p| base.join(p));
        let cfg = TrainConfig {
            seed: kv.get("seed")?.unwrap_or(d.seed),
            iterations,
            jro_iterations: kv.get("jro_iterations")?.unwrap_or(iterations),
            batch_size: kv.get("batch_size")?.unwrap_or(d.batch_size),
            crop: kv.get("crop")?.unwrap_or(d.crop),
            lr,
            jro_lr: kv.get("jro_lr")?.unwrap_or(lr),
            route_spec,
            schedule,
            jro_cap: kv.get("jro_cap")?.unwrap_or(d.jro_cap),
            post_train_rounds: kv.get("post_train_rounds")?.unwrap_or(d.post_train_rounds),
            stop_rule: kv.get("stop_rule")?.unwrap_or(d.stop_rule),
            validate_every: kv.get("validate_every")?.unwrap_or(d.validate_every),
            checkpoint_every: kv.get("checkpoint_every")?.unwrap_or(d.checkpoint_every),
            checkpoint_dir: path("checkpoint_dir"),
            train_data: path("train_data"),
            val_data: path("val_data"),
            synthetic_sequences: kv.get("synthetic_sequences")?.unwrap_or(d.synthetic_sequences),
            synthetic_val_sequences: kv.get("synthetic_val_sequences")?.unwrap_or(d.synthetic_val_sequences),
            synthetic_frames: kv.get("synthetic_frames")?.unwrap_or(d.synthetic_frames),
            synthetic_size: kv.raw("synthetic_size").map(parse_size).transpose()?.unwrap_or(d.synthetic_size),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        self.route_spec.validate()?;
        self.schedule.validate()?;
        if self.schedule.routes() != self.route_spec.routes() {
            return Err(Error::invalid(format!(
                "{} lambdas for {} routes",
                self.schedule.routes(),
                self.route_spec.routes()
            )));
        }
        if self.iterations == 0 || self.jro_iterations == 0 || self.batch_size == 0 {
            return Err(Error::invalid("iterations and batch size must be at least 1"));
        }
        if self.crop == 0 || self.crop % self.route_spec.frame_multiple() != 0 {
            return Err(Error::invalid(format!(
                "crop {} must be a positive multiple of {}",
                self.crop,
                self.route_spec.frame_multiple()
            )));
        }
        if !(self.lr > 0.0) || !(self.jro_lr > 0.0) {
            return Err(Error::invalid("learning rates must be positive"));
        }
        if self.checkpoint_every > 0 && self.checkpoint_dir.is_none() {
            return Err(Error::invalid("checkpoint_every needs checkpoint_dir"));
        }
        Ok(())
    }

    fn synthetic(&self, stream: &str, sequences: usize) -> Result<Vec<Vec<crate::numerics::Tensor>>> {
        let seed = SeedStream::new(self.seed).stream(stream).random();
        let (w, h) = self.synthetic_size;
        gen_synthetic(seed, sequences, self.synthetic_frames, w, h, MotionProfile::Mixed)
    }

    /// Training sequences: `train_data` if set, else seeded synthetic data.
    pub fn training_set(&self) -> Result<TrainingSet> {
        TrainingSet::new(match &self.train_data {
            Some(p) => read_dataset(p)?,
            None => self.synthetic("data.train", self.synthetic_sequences)?,
        })
    }

    /// Validation sequences: `val_data` if set, else seeded synthetic data
    /// disjoint from the training draw.
    pub fn validation_set(&self) -> Result<Vec<Vec<crate::numerics::Tensor>>> {
        let v = match &self.val_data {
            Some(p) => read_dataset(p)?,
            None => self.synthetic("data.val", self.synthetic_val_sequences)?,
        };
        if v.iter().all(Vec::is_empty) {
            return Err(Error::EmptyDataset("validation set has no frames".into()));
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let c = TrainConfig::parse("", Path::new(".")).unwrap();
        assert_eq!(c, TrainConfig::default());
        let c = TrainConfig::parse("iterations = 5\nlambdas = 1,2,3,4\nkappa = 0.5\nstop_rule = literal\ntrain_data = d", Path::new("/x")).unwrap();
        assert_eq!((c.iterations, c.jro_iterations), (5, 5));
        assert_eq!(c.schedule.lambdas, [1.0, 2.0, 3.0, 4.0]);
        assert_eq!(c.stop_rule, StopRule::Literal);
        assert_eq!(c.train_data, Some(PathBuf::from("/x/d")));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(TrainConfig::parse("iteration = 5", Path::new(".")).is_err());
        assert!(TrainConfig::parse("iterations = 0", Path::new(".")).is_err());
        assert!(TrainConfig::parse("crop = 24", Path::new(".")).is_err());
        assert!(TrainConfig::parse("lambdas = 1,2", Path::new(".")).is_err());
        assert!(TrainConfig::parse("lambdas = 1,2,3,4\nlambda_top = 4", Path::new(".")).is_err());
    }
}
