//! Joint-routes optimization after a short initial training run: decays the
//! multipliers of the lower routes top-down and logs the trajectory.
//!
//! Usage: `cargo run --release --example joint_routes -- [iterations] [trajectory.csv]`

use routecodec::training::{evaluate_routes, jro, train_initial, write_trajectory, LambdaSchedule, TrainConfig};

fn main() -> routecodec::Result<()> {
    let mut args = std::env::args().skip(1);
    let iterations = args.next().map(|s| s.parse().expect("iterations")).unwrap_or(40);
    let config = TrainConfig {
        iterations,
        jro_iterations: iterations / 2 + 1,
        lr: 3e-3,
        jro_lr: 5e-4,
        jro_cap: 3,
        post_train_rounds: 2,
        schedule: LambdaSchedule::uniform(4, 3251.25, 0.7)?,
        synthetic_sequences: 4,
        synthetic_val_sequences: 2,
        synthetic_frames: 6,
        ..TrainConfig::default()
    };
    let data = config.training_set()?;
    let validation = config.validation_set()?;
    let pretrained = train_initial(&config, &data, &validation)?.model;
    let before = evaluate_routes(&pretrained, &validation)?;
    let outcome = jro(&config, pretrained, &data, &validation)?;

    for row in &outcome.trajectory {
        let lambdas: Vec<String> = row.lambdas.iter().map(|l| format!("{l:.0}")).collect();
        let rates: Vec<String> = row.points.iter().map(|p| format!("{:.3}", p.rate)).collect();
        println!("{:<8} k={} step {}  lambdas [{}]  bpp [{}]", row.phase.as_str(), row.k, row.inner_iter, lambdas.join(", "), rates.join(", "));
    }
    for w in &outcome.warnings {
        println!("warning: {w}");
    }
    let after = evaluate_routes(&outcome.model, &validation)?;
    println!("route 0: {:.3} bpp before, {:.3} bpp after", before[0].rate, after[0].rate);

    if let Some(path) = args.next() {
        write_trajectory(&outcome.trajectory, config.seed, std::fs::File::create(&path)?)?;
        println!("trajectory written to {path}");
    }
    Ok(())
}
