//! A short run of the initial training strategy on synthetic data, printing
//! the validation RD point of every route after each phase.
//!
//! Usage: `cargo run --release --example initial_training -- [iterations] [out.drnw]`

use routecodec::training::{train_initial, LambdaSchedule, TrainConfig};

fn main() -> routecodec::Result<()> {
    let mut args = std::env::args().skip(1);
    let iterations = args.next().map(|s| s.parse().expect("iterations")).unwrap_or(50);
    let config = TrainConfig {
        iterations,
        lr: 3e-3,
        schedule: LambdaSchedule::uniform(4, 3251.25, 0.7)?,
        synthetic_sequences: 4,
        synthetic_val_sequences: 2,
        synthetic_frames: 6,
        ..TrainConfig::default()
    };
    let data = config.training_set()?;
    let validation = config.validation_set()?;
    let outcome = train_initial(&config, &data, &validation)?;

    for (it, points) in &outcome.validation {
        let cells: Vec<String> = points.iter().map(|p| format!("{:.3} bpp {:.2} dB", p.rate, p.psnr())).collect();
        println!("after {it:>5} iterations: {}", cells.join(" | "));
    }
    if let Some(path) = args.next() {
        std::fs::write(&path, outcome.model.to_checkpoint())?;
        println!("checkpoint written to {path}");
    }
    Ok(())
}
