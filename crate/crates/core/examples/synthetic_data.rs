//! Generate seeded synthetic sequences and write them as PGM directories.
//!
//! Usage: `cargo run --example synthetic_data -- [out_dir]`

use std::path::PathBuf;

use routecodec::pipeline::{gen_sequence, psnr, write_synthetic, MotionProfile};

fn main() -> routecodec::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("routecodec_synth"));

    for profile in [MotionProfile::Static, MotionProfile::Shift { dx: 2, dy: 1 }, MotionProfile::Mixed] {
        let frames = gen_sequence(11, 0, 6, 64, 64, profile)?;
        let diffs: Vec<String> = frames
            .windows(2)
            .map(|w| psnr(&w[1], &w[0]).map(|p| format!("{p:.1}")))
            .collect::<routecodec::Result<_>>()?;
        println!("{profile:?}: PSNR of each frame against its predecessor (dB): {}", diffs.join(" "));
    }

    write_synthetic(&out, 11, 3, 8, 64, 64, MotionProfile::Mixed)?;
    println!("wrote 3 sequences of 8 frames to {}", out.display());
    Ok(())
}
