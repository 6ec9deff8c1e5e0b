//! Encode a sequence into the container format, write it to disk, read it
//! back and decode, then show that a flipped byte is caught.
//!
//! Usage: `cargo run --release --example bitstream`

use routecodec::dra::{DraModel, RouteSpec};
use routecodec::pipeline::{decode_sequence, encode_sequence, gen_sequence, BitstreamContainer, MotionProfile, RoutePolicy};

fn main() -> routecodec::Result<()> {
    let model = DraModel::new(RouteSpec::default(), 2)?;
    let frames = gen_sequence(8, 0, 6, 64, 32, MotionProfile::Mixed)?;
    let policy = RoutePolicy::PerFrame(vec![3, 0, 1, 2, 3, 1]);
    let (container, stats, recon) = encode_sequence(&frames, &model, policy, 4)?;

    let path = std::env::temp_dir().join("routecodec_example.drnv");
    std::fs::write(&path, container.to_bytes()?)?;
    let bytes = std::fs::read(&path)?;
    println!("{} frames, {} payload bits, {} bytes on disk at {}", stats.frames.len(), stats.total_bits(), bytes.len(), path.display());

    let decoded = decode_sequence(&BitstreamContainer::from_bytes(&bytes)?, &model)?;
    let identical = decoded.iter().zip(&recon).all(|(a, b)| a.bit_eq(b));
    println!("decoded frames identical to the encoder's reconstructions: {identical}");

    let mut damaged = bytes.clone();
    damaged[bytes.len() / 2] ^= 0x10;
    match BitstreamContainer::from_bytes(&damaged) {
        Ok(_) => println!("corruption went unnoticed"),
        Err(e) => println!("corrupted stream rejected: {e}"),
    }
    match BitstreamContainer::from_bytes(&bytes[..bytes.len() - 5]) {
        Ok(_) => println!("truncation went unnoticed"),
        Err(e) => println!("truncated stream rejected: {e}"),
    }
    Ok(())
}
