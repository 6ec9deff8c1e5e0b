//! 8-bit grayscale frames as binary PGM (P5), one file per frame.

use std::fs;
use std::path::{Path, PathBuf};

use crate::numerics::Tensor;
use crate::{Error, Result};

/// Quantize a `[0, 1]` value to the nearest 8-bit level.
pub fn to_level(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_pgm(frame: &Tensor) -> Result<Vec<u8>> {
    let [n, c, h, w] = frame.shape();
    if n != 1 || c != 1 {
        return Err(Error::shape(format!("PGM holds one gray frame, got {n}x{c} planes")));
    }
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(frame.data().iter().map(|&v| to_level(v)));
    Ok(out)
}

fn header_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format("truncated PGM header".into()));
    }
    Ok(&bytes[start..*pos])
}

fn header_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let tok = header_token(bytes, pos)?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format(format!("bad PGM {what}")))
}

/// Parse a binary 8-bit PGM into a `[1, 1, H, W]` tensor scaled to `[0, 1]`.
pub fn parse_pgm(bytes: &[u8]) -> Result<Tensor> {
    let mut pos = 0;
    if header_token(bytes, &mut pos)? != b"P5" {
        return Err(Error::Format("not a binary PGM (P5)".into()));
    }
    let w = header_number(bytes, &mut pos, "width")?;
    let h = header_number(bytes, &mut pos, "height")?;
    let max = header_number(bytes, &mut pos, "maximum value")?;
    if max != 255 {
        return Err(Error::Format(format!("only 8-bit PGM is supported, maximum value is {max}")));
    }
    pos += 1;
    let data = bytes.get(pos..).unwrap_or_default();
    if data.len() != w * h {
        return Err(Error::Format(format!("PGM {w}x{h} carries {} pixel bytes", data.len())));
    }
    Tensor::from_vec([1, 1, h, w], data.iter().map(|&b| f64::from(b) / 255.0).collect())
}

pub fn read_pgm(path: &Path) -> Result<Tensor> {
    parse_pgm(&fs::read(path)?).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write_pgm(path: &Path, frame: &Tensor) -> Result<()> {
    Ok(fs::write(path, encode_pgm(frame)?)?)
}

/// Frame file name for index `t`.
pub fn frame_name(t: usize) -> String {
    format!("{t:05}.pgm")
}

/// All `.pgm` files of `dir`, in name order.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
        .collect();
    files.sort();
    Ok(files)
}

/// Read a frame directory; every frame must have the size of the first.
pub fn read_sequence(dir: &Path) -> Result<Vec<Tensor>> {
    let files = list_frames(dir)?;
    if files.is_empty() {
        return Err(Error::EmptyDataset(format!("no .pgm frames in {}", dir.display())));
    }
    let mut frames = Vec::with_capacity(files.len());
    for f in &files {
        let t = read_pgm(f)?;
        if let Some(first) = frames.first() {
            let first: &Tensor = first;
            if first.shape() != t.shape() {
                return Err(Error::shape(format!(
                    "{} is {}x{}, earlier frames are {}x{}",
                    f.display(),
                    t.width(),
                    t.height(),
                    first.width(),
                    first.height()
                )));
            }
        }
        frames.push(t);
    }
    Ok(frames)
}

pub fn write_sequence(dir: &Path, frames: &[Tensor]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (t, f) in frames.iter().enumerate() {
        write_pgm(&dir.join(frame_name(t)), f)?;
    }
    Ok(())
}

/// Sequence directories under `root`: its subdirectories in name order, or
/// `root` itself when it holds frames directly.
pub fn read_dataset(root: &Path) -> Result<Vec<Vec<Tensor>>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Ok(vec![read_sequence(root)?]);
    }
    dirs.iter().map(|d| read_sequence(d)).collect()
}
