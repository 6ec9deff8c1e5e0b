//! Joint-routes optimization: walk each lower route toward its diverging
//! point by decaying the multipliers at and below it, then push route 0
//! further down.

use std::io::Write;

use super::data::TrainingSet;
use super::loss::{evaluate_routes, slope, RDPoint};
use super::schedule::decay_lambdas;
use super::train::Trainer;
use super::{LambdaSchedule, StopRule, TrainConfig};
use crate::dra::DraModel;
use crate::numerics::Tensor;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    /// Evaluation of the pre-trained model.
    Pretrain,
    Jro,
    /// Inner loop hit its cap without reaching a diverging point.
    Cap,
    Post,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Pretrain => "pretrain",
            Phase::Jro => "jro",
            Phase::Cap => "cap",
            Phase::Post => "post",
        }
    }
}

/// One trajectory log entry.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub phase: Phase,
    pub k: usize,
    pub inner_iter: usize,
    pub lambdas: Vec<f64>,
    pub points: Vec<RDPoint>,
    /// Slope between routes `k` and `k + 1`; absent in post-training.
    pub xi: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct JroOutcome {
    pub model: DraModel,
    pub schedule: LambdaSchedule,
    pub trajectory: Vec<TrajectoryRow>,
    pub warnings: Vec<String>,
}

struct Run<'a> {
    trainer: Trainer<'a>,
    validation: &'a [Vec<Tensor>],
    schedule: LambdaSchedule,
    trajectory: Vec<TrajectoryRow>,
}

impl Run<'_> {
    fn step(&mut self, model: &mut DraModel, k: usize) -> Result<Vec<RDPoint>> {
        let iters = self.trainer.config.jro_iterations;
        let lr = self.trainer.config.jro_lr;
        self.trainer.fine_tune(model, &self.schedule, k, iters, lr, |_| Ok(()))?;
        evaluate_routes(model, self.validation)
    }

    fn record(&mut self, phase: Phase, k: usize, inner_iter: usize, points: &[RDPoint], xi: Option<f64>) {
        self.trajectory.push(TrajectoryRow {
            phase,
            k,
            inner_iter,
            lambdas: self.schedule.lambdas.clone(),
            points: points.to_vec(),
            xi,
        });
    }

    fn post_train(&mut self, model: &mut DraModel) -> Result<()> {
        for round in 1..=self.trainer.config.post_train_rounds {
            self.schedule = decay_lambdas(&self.schedule, 0, self.schedule.kappa)?;
            let points = self.step(model, 0)?;
            self.record(Phase::Post, 0, round, &points, None);
        }
        Ok(())
    }
}

/// Joint-routes optimization of a model pre-trained under `config.schedule`,
/// followed by post-training of route 0.
///
/// For `k = K-2 .. 0`: decay `λ_0 ..= λ_k`, fine-tune route `k`, and measure
/// the chord slope `ξ` between routes `k` and `k + 1` on the validation set,
/// until the diverging point is reached or `jro_cap` steps have run.
pub fn jro(config: &TrainConfig, pretrained: DraModel, data: &TrainingSet, validation: &[Vec<Tensor>]) -> Result<JroOutcome> {
    config.validate()?;
    if pretrained.spec != config.route_spec {
        return Err(Error::invalid("pre-trained model layout differs from the configured routes"));
    }
    let k_routes = pretrained.spec.routes();
    if k_routes < 2 {
        return Err(Error::invalid("joint-routes optimization needs at least two routes"));
    }
    let mut model = pretrained;
    let mut run = Run {
        trainer: Trainer::new(config, data, "jro"),
        validation,
        schedule: config.schedule.clone(),
        trajectory: Vec::new(),
    };
    let mut warnings = Vec::new();
    let mut points = evaluate_routes(&model, validation)?;
    let xi0 = slope(&points[k_routes - 2], &points[k_routes - 1])?;
    run.record(Phase::Pretrain, k_routes - 1, 0, &points, Some(xi0));

    for k in (0..k_routes - 1).rev() {
        let mut xi_pre = slope(&points[k], &points[k + 1])?;
        let mut r_pre = points[k].rate;
        let mut reached = false;
        for inner in 1..=config.jro_cap {
            run.schedule = decay_lambdas(&run.schedule, k, run.schedule.kappa)?;
            points = run.step(&mut model, k)?;
            let xi = slope(&points[k], &points[k + 1])?;
            let r = points[k].rate;
            run.record(Phase::Jro, k, inner, &points, Some(xi));
            reached = match config.stop_rule {
                StopRule::Magnitude => xi.abs() >= xi_pre.abs() && r < r_pre,
                // R_pre is never updated from its initial zero
                StopRule::Literal => xi < xi_pre && r < 0.0,
            };
            xi_pre = xi;
            r_pre = r;
            if reached {
                break;
            }
        }
        if !reached {
            let xi = slope(&points[k], &points[k + 1])?;
            run.record(Phase::Cap, k, config.jro_cap, &points, Some(xi));
            warnings.push(format!("route {k}: no diverging point within {} steps", config.jro_cap));
        }
    }
    run.post_train(&mut model)?;
    Ok(JroOutcome {
        model,
        schedule: run.schedule,
        trajectory: run.trajectory,
        warnings,
    })
}

/// Post-training on its own: `post_train_rounds` decays of `λ_0`, each
/// followed by fine-tuning route 0.
pub fn post_train(
    config: &TrainConfig,
    model: DraModel,
    schedule: &LambdaSchedule,
    data: &TrainingSet,
    validation: &[Vec<Tensor>],
) -> Result<(DraModel, LambdaSchedule, Vec<TrajectoryRow>)> {
    let mut model = model;
    let mut run = Run {
        trainer: Trainer::new(config, data, "post"),
        validation,
        schedule: schedule.clone(),
        trajectory: Vec::new(),
    };
    run.post_train(&mut model)?;
    Ok((model, run.schedule, run.trajectory))
}

/// Trajectory CSV: a `# seed=` line, then `phase, k, inner_iter,
/// lambda_0.., R_0.., D_0.., xi`.
pub fn write_trajectory<W: Write>(rows: &[TrajectoryRow], seed: u64, mut out: W) -> Result<()> {
    writeln!(out, "# seed={seed}")?;
    let k = rows.first().map_or(0, |r| r.lambdas.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["phase".to_string(), "k".into(), "inner_iter".into()];
    for prefix in ["lambda", "R", "D"] {
        header.extend((0..k).map(|i| format!("{prefix}_{i}")));
    }
    header.push("xi".into());
    let csv_err = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![r.phase.as_str().to_string(), r.k.to_string(), r.inner_iter.to_string()];
        rec.extend(r.lambdas.iter().map(f64::to_string));
        rec.extend(r.points.iter().map(|p| p.rate.to_string()));
        rec.extend(r.points.iter().map(|p| p.distortion.to_string()));
        rec.push(r.xi.map(|x| x.to_string()).unwrap_or_default());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dra::RouteSpec;
    use crate::pipeline::synth::{gen_synthetic, MotionProfile};

    fn setup() -> (TrainConfig, TrainingSet, Vec<Vec<Tensor>>) {
        let spec = RouteSpec::new(vec![2, 4, 5], vec![3, 4, 6], 2).unwrap();
        let cfg = TrainConfig {
            iterations: 2,
            jro_iterations: 1,
            batch_size: 1,
            crop: 8,
            lr: 1e-3,
            jro_cap: 2,
            post_train_rounds: 2,
            schedule: LambdaSchedule::uniform(3, 50.0, 0.5).unwrap(),
            route_spec: spec,
            ..TrainConfig::default()
        };
        let data = TrainingSet::new(gen_synthetic(1, 2, 3, 16, 16, MotionProfile::Mixed).unwrap()).unwrap();
        let val = gen_synthetic(2, 1, 2, 16, 16, MotionProfile::Mixed).unwrap();
        (cfg, data, val)
    }

    #[test]
    fn routes_are_visited_top_down_and_post_training_decays_lambda_zero() {
        let (cfg, data, val) = setup();
        let model = DraModel::new(cfg.route_spec.clone(), 3).unwrap();
        let out = jro(&cfg, model, &data, &val).unwrap();
        let t = &out.trajectory;
        assert_eq!(t[0].phase, Phase::Pretrain);
        let ks: Vec<usize> = t.iter().filter(|r| r.phase == Phase::Jro).map(|r| r.k).collect();
        assert!(ks.windows(2).all(|w| w[1] <= w[0]), "{ks:?}");
        assert_eq!(ks.first(), Some(&1));
        assert_eq!(ks.last(), Some(&0));
        let post: Vec<_> = t.iter().filter(|r| r.phase == Phase::Post).collect();
        assert_eq!(post.len(), 2);
        let before = t[t.len() - 3].lambdas.clone();
        assert_eq!(out.schedule.lambdas[0], before[0] * 0.25);
        assert_eq!(out.schedule.lambdas[1..], before[1..]);
        assert_eq!(out.schedule.lambdas[2], 50.0);
    }

    #[test]
    fn literal_rule_always_runs_to_the_cap() {
        let (cfg, data, val) = setup();
        let cfg = TrainConfig { stop_rule: StopRule::Literal, ..cfg };
        let model = DraModel::new(cfg.route_spec.clone(), 3).unwrap();
        let out = jro(&cfg, model, &data, &val).unwrap();
        assert_eq!(out.warnings.len(), 2);
        assert_eq!(out.trajectory.iter().filter(|r| r.phase == Phase::Cap).count(), 2);
        let mut buf = Vec::new();
        write_trajectory(&out.trajectory, cfg.seed, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# seed=1\nphase,k,inner_iter,lambda_0,lambda_1,lambda_2,R_0"));
        assert_eq!(text.lines().count(), 2 + out.trajectory.len());
    }
}
