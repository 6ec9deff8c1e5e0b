//! Rate-controlled coding of a synthetic sequence with the oracle estimator:
//! per-frame allocation and route, then the achieved bitrate error.
//!
//! Usage: `cargo run --release --example rate_control -- [model.drnw] [target_bpp]`

use routecodec::dra::{DraModel, RouteSpec};
use routecodec::pipeline::{encode_sequence, gen_sequence, MotionProfile, RoutePolicy};
use routecodec::rca::{OracleEstimator, DEFAULT_WINDOW};

fn main() -> routecodec::Result<()> {
    let mut args = std::env::args().skip(1);
    let model = match args.next() {
        Some(path) => DraModel::from_checkpoint(&std::fs::read(path)?)?,
        None => DraModel::new(RouteSpec::default(), 1)?,
    };
    let frames = gen_sequence(3, 0, 24, 64, 64, MotionProfile::Mixed)?;

    let mean_at = |k: usize| -> routecodec::Result<f64> {
        Ok(encode_sequence(&frames, &model, RoutePolicy::Fixed(k), 12)?.1.mean_bpp())
    };
    let (lo, hi) = (mean_at(0)?, mean_at(model.spec.routes() - 1)?);
    let target = match args.next() {
        Some(t) => t.parse().expect("target bpp"),
        None => (lo + hi) / 2.0,
    };
    println!("fixed-route means: route 0 {lo:.3} bpp, top route {hi:.3} bpp; target {target:.3} bpp");

    let mut oracle = OracleEstimator { model: &model };
    let policy = RoutePolicy::Controlled { estimator: &mut oracle, target_bpp: target, window: DEFAULT_WINDOW };
    let (_, stats, _) = encode_sequence(&frames, &model, policy, 12)?;
    for f in &stats.frames {
        let alloc = f.target_alloc.map_or("-".to_string(), |t| format!("{t:.3}"));
        println!("frame {:>2} {} alloc {alloc:>6} route {} coded {:.3} bpp", f.index, f.frame_type.as_str(), f.route, f.bpp);
    }
    println!("mean {:.4} bpp, bitrate error {:.2}%", stats.mean_bpp(), stats.delta_r()?);
    Ok(())
}
