//! Bjøntegaard deltas between two four-point RD curves.
//!
//! Usage: `cargo run --example bd_rate`

use routecodec::pipeline::{bd_metrics, RdCurve};

fn main() -> routecodec::Result<()> {
    let anchor = RdCurve::new(vec![(0.10, 30.1), (0.20, 32.6), (0.40, 35.0), (0.80, 37.2)])?;
    let cheaper = RdCurve::new(anchor.points.iter().map(|&(r, q)| (0.9 * r, q)).collect())?;
    let sharper = RdCurve::new(anchor.points.iter().map(|&(r, q)| (r, q + 0.5)).collect())?;

    for (name, test) in [("same curve", &anchor), ("10% fewer bits", &cheaper), ("+0.5 dB", &sharper)] {
        let (rate, quality) = bd_metrics(&anchor, test)?;
        println!("{name:<15} BD-Rate {rate:+7.3}%  BD-PSNR {quality:+.3} dB");
    }
    Ok(())
}
