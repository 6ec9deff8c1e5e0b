//! Seeded synthetic grayscale sequences on a torus.

use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::frame::write_sequence;
use crate::numerics::{SeedStream, Tensor};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MotionProfile {
    /// Every frame equals the first.
    Static,
    /// The whole texture moves by `(dx, dy)` pixels per frame, wrapping around.
    Shift { dx: i32, dy: i32 },
    /// Panning background, independently moving rectangles and sensor noise.
    Mixed,
}

impl FromStr for MotionProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(MotionProfile::Static),
            "mixed" => Ok(MotionProfile::Mixed),
            _ => {
                let bad = || Error::invalid(format!("unknown motion profile {s:?}; use static, mixed or shift:DX,DY"));
                let rest = s.strip_prefix("shift:").ok_or_else(bad)?;
                let (a, b) = rest.split_once(',').ok_or_else(bad)?;
                Ok(MotionProfile::Shift {
                    dx: a.trim().parse().map_err(|_| bad())?,
                    dy: b.trim().parse().map_err(|_| bad())?,
                })
            }
        }
    }
}

/// Texture: smooth gradient, a few flat rectangles and a faint ripple.
fn texture(w: usize, h: usize, rng: &mut impl Rng) -> Vec<f64> {
    let gx = rng.random_range(-0.3..0.3);
    let gy = rng.random_range(-0.3..0.3);
    let base = rng.random_range(0.3..0.7);
    let fx = rng.random_range(1..4) as f64;
    let fy = rng.random_range(1..4) as f64;
    let amp = rng.random_range(0.02..0.08);
    let tau = std::f64::consts::TAU;
    let mut img: Vec<f64> = (0..h * w)
        .map(|i| {
            let (y, x) = ((i / w) as f64 / h as f64, (i % w) as f64 / w as f64);
            // periodic gradient so the torus has no seam
            base + gx * (tau * x).sin() + gy * (tau * y).cos() + amp * (tau * (fx * x + fy * y)).sin()
        })
        .collect();
    for _ in 0..rng.random_range(2..6) {
        let rw = rng.random_range(w / 8..w / 2 + 1);
        let rh = rng.random_range(h / 8..h / 2 + 1);
        let (x0, y0) = (rng.random_range(0..w), rng.random_range(0..h));
        let v = rng.random_range(0.0..1.0);
        for y in 0..rh {
            for x in 0..rw {
                img[((y0 + y) % h) * w + (x0 + x) % w] = v;
            }
        }
    }
    img
}

struct Sprite {
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
    w: usize,
    h: usize,
    value: f64,
}

fn quantized(w: usize, h: usize, data: Vec<f64>) -> Tensor {
    let data = data.into_iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0).collect();
    Tensor::from_vec([1, 1, h, w], data).expect("size matches")
}

fn shifted(src: &[f64], w: usize, h: usize, dx: i64, dy: i64) -> Vec<f64> {
    (0..h * w)
        .map(|i| {
            let (y, x) = ((i / w) as i64, (i % w) as i64);
            let sy = (y - dy).rem_euclid(h as i64) as usize;
            let sx = (x - dx).rem_euclid(w as i64) as usize;
            src[sy * w + sx]
        })
        .collect()
}

/// Sequence `index` of the dataset seeded by `seed`; frames are quantized to
/// 8-bit levels so they survive a PGM round trip unchanged.
pub fn gen_sequence(seed: u64, index: usize, frames: usize, width: usize, height: usize, profile: MotionProfile) -> Result<Vec<Tensor>> {
    if width == 0 || height == 0 || width % 8 != 0 || height % 8 != 0 {
        return Err(Error::invalid(format!("frame size {width}x{height} must be a positive multiple of 8")));
    }
    let mut rng = SeedStream::new(seed).indexed("synth", index as u64);
    let tex = texture(width, height, &mut rng);
    let (w, h) = (width, height);
    match profile {
        MotionProfile::Static => Ok(vec![quantized(w, h, tex); frames]),
        MotionProfile::Shift { dx, dy } => Ok((0..frames)
            .map(|t| quantized(w, h, shifted(&tex, w, h, dx as i64 * t as i64, dy as i64 * t as i64)))
            .collect()),
        MotionProfile::Mixed => {
            let pan = (rng.random_range(-2..=2i64), rng.random_range(-1..=1i64));
            let noise_sd: f64 = rng.random_range(0.0..3.0) / 255.0;
            let noise = Normal::new(0.0, noise_sd.max(1e-12)).expect("positive sd");
            let mut sprites: Vec<Sprite> = (0..rng.random_range(1..4))
                .map(|_| Sprite {
                    x: rng.random_range(0.0..w as f64),
                    y: rng.random_range(0.0..h as f64),
                    vx: rng.random_range(-3.0..3.0),
                    vy: rng.random_range(-3.0..3.0),
                    w: rng.random_range(w / 8..w / 3 + 1),
                    h: rng.random_range(h / 8..h / 3 + 1),
                    value: rng.random_range(0.0..1.0),
                })
                .collect();
            let mut out = Vec::with_capacity(frames);
            for t in 0..frames {
                let mut img = shifted(&tex, w, h, pan.0 * t as i64, pan.1 * t as i64);
                for s in &sprites {
                    let (x0, y0) = (s.x.floor() as i64, s.y.floor() as i64);
                    for y in 0..s.h as i64 {
                        for x in 0..s.w as i64 {
                            let yy = (y0 + y).rem_euclid(h as i64) as usize;
                            let xx = (x0 + x).rem_euclid(w as i64) as usize;
                            img[yy * w + xx] = s.value;
                        }
                    }
                }
                if noise_sd > 0.0 {
                    for v in &mut img {
                        *v += noise.sample(&mut rng);
                    }
                }
                out.push(quantized(w, h, img));
                for s in &mut sprites {
                    s.x += s.vx;
                    s.y += s.vy;
                }
            }
            Ok(out)
        }
    }
}

pub fn gen_synthetic(seed: u64, sequences: usize, frames: usize, width: usize, height: usize, profile: MotionProfile) -> Result<Vec<Vec<Tensor>>> {
    (0..sequences).map(|i| gen_sequence(seed, i, frames, width, height, profile)).collect()
}

/// Sequence directory name for index `i`.
pub fn sequence_name(i: usize) -> String {
    format!("seq_{i:03}")
}

/// Write `gen_synthetic` output as `out/seq_NNN/NNNNN.pgm`.
pub fn write_synthetic(out: &Path, seed: u64, sequences: usize, frames: usize, width: usize, height: usize, profile: MotionProfile) -> Result<()> {
    for (i, seq) in gen_synthetic(seed, sequences, frames, width, height, profile)?.iter().enumerate() {
        write_sequence(&out.join(sequence_name(i)), seq)?;
    }
    Ok(())
}
