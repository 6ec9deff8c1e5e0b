//! Optimization loops: route-masked fine-tuning and the initial training
//! strategy.

use rand_chacha::ChaCha8Rng;

use super::data::TrainingSet;
use super::loss::{evaluate_routes, rd_loss, RDPoint};
use super::{LambdaSchedule, TrainConfig};
use crate::dra::DraModel;
use crate::numerics::{OptimizerState, SeedStream, Tensor};
use crate::Result;

/// Random streams and bookkeeping shared by every phase of one run.
pub struct Trainer<'a> {
    pub config: &'a TrainConfig,
    pub data: &'a TrainingSet,
    batch_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
    batches: u64,
    /// Summed loss of every iteration, in order.
    pub loss_history: Vec<f64>,
}

impl<'a> Trainer<'a> {
    /// `label` separates the random streams of different runs sharing a seed.
    pub fn new(config: &'a TrainConfig, data: &'a TrainingSet, label: &str) -> Self {
        let seeds = SeedStream::new(config.seed);
        Trainer {
            config,
            data,
            batch_rng: seeds.stream(&format!("{label}.batch")),
            noise_rng: seeds.stream(&format!("{label}.noise")),
            batches: 0,
            loss_history: Vec::new(),
        }
    }

    /// `iters` Adam steps at rate `lr` on the summed loss under `schedule`,
    /// updating only the parameters route `k` reads. Each call starts fresh
    /// Adam moments.
    /// `after_step` sees the model after every update.
    pub fn fine_tune(
        &mut self,
        model: &mut DraModel,
        schedule: &LambdaSchedule,
        k: usize,
        iters: usize,
        lr: f64,
        mut after_step: impl FnMut(&DraModel) -> Result<()>,
    ) -> Result<()> {
        model.spec.check_route(k)?;
        let mut opt = OptimizerState::new(lr);
        for _ in 0..iters {
            let batch = self.data.sample(self.config.batch_size, self.config.crop, self.batches, &mut self.batch_rng)?;
            self.batches += 1;
            model.zero_grad();
            let l = rd_loss(model, &batch, schedule, &mut self.noise_rng, true)?;
            model.mask_grads_to_route(k)?;
            opt.adam_step(&mut model.params_mut())?;
            self.loss_history.push(l.loss);
            after_step(model)?;
        }
        model.seed = self.config.seed;
        Ok(())
    }
}

/// Result of the initial training strategy.
#[derive(Clone, Debug)]
pub struct InitialOutcome {
    pub model: DraModel,
    pub loss_history: Vec<f64>,
    /// `(iteration, RD points)` at the configured cadence and after each phase.
    pub validation: Vec<(usize, Vec<RDPoint>)>,
}

/// Initial training: for `k = 0 .. K-1`, `N` iterations of the summed loss
/// over all routes, each updating only route `k`'s parameters.
pub fn train_initial(config: &TrainConfig, data: &TrainingSet, validation: &[Vec<Tensor>]) -> Result<InitialOutcome> {
    config.validate()?;
    let mut model = DraModel::new(config.route_spec.clone(), config.seed)?;
    let mut trainer = Trainer::new(config, data, "initial");
    let mut log = Vec::new();
    let mut it = 0usize;
    for k in 0..model.spec.routes() {
        trainer.fine_tune(&mut model, &config.schedule, k, config.iterations, config.lr, |m| {
            it += 1;
            if config.validate_every > 0 && it % config.validate_every == 0 {
                log.push((it, evaluate_routes(m, validation)?));
            }
            if config.checkpoint_every > 0 && it % config.checkpoint_every == 0 {
                let dir = config.checkpoint_dir.as_ref().expect("validated with checkpoint_every");
                std::fs::create_dir_all(dir)?;
                let mut m = m.clone();
                m.seed = config.seed;
                std::fs::write(dir.join(format!("initial_{it:06}.drnw")), m.to_checkpoint())?;
            }
            Ok(())
        })?;
        if log.last().is_none_or(|(i, _)| *i != it) {
            log.push((it, evaluate_routes(&model, validation)?));
        }
    }
    Ok(InitialOutcome {
        model,
        loss_history: trainer.loss_history,
        validation: log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dra::RouteSpec;
    use crate::pipeline::synth::{gen_synthetic, MotionProfile};

    fn tiny_config() -> TrainConfig {
        let spec = RouteSpec::new(vec![2, 4, 5], vec![3, 4, 6], 2).unwrap();
        TrainConfig {
            iterations: 3,
            batch_size: 2,
            crop: 8,
            lr: 1e-3,
            schedule: LambdaSchedule::uniform(3, 50.0, 0.7).unwrap(),
            route_spec: spec,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn same_seed_same_checkpoint() {
        let cfg = tiny_config();
        let data = TrainingSet::new(gen_synthetic(1, 2, 3, 16, 16, MotionProfile::Mixed).unwrap()).unwrap();
        let val = gen_synthetic(2, 1, 2, 16, 16, MotionProfile::Mixed).unwrap();
        let a = train_initial(&cfg, &data, &val).unwrap();
        let b = train_initial(&cfg, &data, &val).unwrap();
        assert_eq!(a.model.to_checkpoint(), b.model.to_checkpoint());
        assert_eq!(a.loss_history.len(), 9);
        assert_eq!(a.validation.len(), 3);
        assert_eq!(a.model.seed, cfg.seed);
        let other = train_initial(&TrainConfig { seed: 2, ..cfg }, &data, &val).unwrap();
        assert_ne!(other.model.to_checkpoint(), a.model.to_checkpoint());
    }

    #[test]
    fn phase_k_leaves_wider_weights_alone() {
        let cfg = tiny_config();
        let data = TrainingSet::new(gen_synthetic(1, 2, 3, 16, 16, MotionProfile::Mixed).unwrap()).unwrap();
        let mut model = DraModel::new(cfg.route_spec.clone(), 4).unwrap();
        let before = model.clone();
        Trainer::new(&cfg, &data, "t").fine_tune(&mut model, &cfg.schedule, 0, 2, cfg.lr, |_| Ok(())).unwrap();
        // group net 2 is only read by route 2
        for (a, b) in model.group_nets.nets[2].params().iter().zip(before.group_nets.nets[2].params()) {
            assert!(a.value.bit_eq(&b.value));
        }
        assert!(!model.encoder.layers[0].weight.value.bit_eq(&before.encoder.layers[0].weight.value));
    }
}
