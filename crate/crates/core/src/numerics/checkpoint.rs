//! Binary parameter checkpoints.
//!
//! Layout: 4-byte magic, 1-byte version, `u32` entry count, then per entry a
//! `u32`-length-prefixed UTF-8 id, four `u32` shape dimensions and the raw
//! little-endian `f64` values. All integers are little-endian.

use std::io::Read;

use super::{Parameter, Tensor};
use crate::{Error, Result};

pub const MODEL_MAGIC: [u8; 4] = *b"DRNW";
pub const ESTIMATOR_MAGIC: [u8; 4] = *b"DRNE";
pub const CHECKPOINT_VERSION: u8 = 1;

pub fn write_checkpoint(magic: [u8; 4], entries: &[(&str, &Tensor)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&magic);
    out.push(CHECKPOINT_VERSION);
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (id, t) in entries {
        out.extend_from_slice(&(id.len() as u32).to_le_bytes());
        out.extend_from_slice(id.as_bytes());
        for d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn read_checkpoint(magic: [u8; 4], bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let mut r = bytes;
    let mut head = [0u8; 5];
    r.read_exact(&mut head)
        .map_err(|_| Error::Format("checkpoint shorter than its header".into()))?;
    if head[..4] != magic {
        return Err(Error::Format(format!(
            "bad checkpoint magic {:?}, expected {:?}",
            String::from_utf8_lossy(&head[..4]),
            String::from_utf8_lossy(&magic)
        )));
    }
    if head[4] != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {}", head[4])));
    }
    let count = read_u32(&mut r)? as usize;
    let mut entries = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        if len > r.len() {
            return Err(Error::Format("truncated parameter id".into()));
        }
        let id = String::from_utf8(r[..len].to_vec())
            .map_err(|_| Error::Format("parameter id is not UTF-8".into()))?;
        r = &r[len..];
        let mut shape = [0usize; 4];
        for d in shape.iter_mut() {
            *d = read_u32(&mut r)? as usize;
        }
        let n: usize = shape.iter().product();
        if n.checked_mul(8).is_none_or(|b| b > r.len()) {
            return Err(Error::Format(format!("truncated values for {id}")));
        }
        let data = r[..n * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        r = &r[n * 8..];
        entries.push((id, Tensor::from_vec(shape, data)?));
    }
    if !r.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes after checkpoint", r.len())));
    }
    Ok(entries)
}

/// Copy checkpoint values into `params`, matching by id and shape.
pub fn restore_params(params: &mut [&mut Parameter], entries: &[(String, Tensor)]) -> Result<()> {
    for p in params.iter_mut() {
        let (_, t) = entries
            .iter()
            .find(|(id, _)| *id == p.id)
            .ok_or_else(|| Error::Format(format!("checkpoint lacks parameter {}", p.id)))?;
        if t.shape() != p.value.shape() {
            return Err(Error::Format(format!(
                "parameter {} has shape {:?} in checkpoint, model expects {:?}",
                p.id,
                t.shape(),
                p.value.shape()
            )));
        }
        p.value = t.clone();
        p.zero_grad();
    }
    Ok(())
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| Error::Format("truncated checkpoint".into()))?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_magic_check() {
        let a = Tensor::from_vec([1, 2, 1, 2], vec![1.0, -2.5, 3.25, f64::MIN_POSITIVE]).unwrap();
        let bytes = write_checkpoint(MODEL_MAGIC, &[("enc.0.weight", &a)]);
        let back = read_checkpoint(MODEL_MAGIC, &bytes).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].0, "enc.0.weight");
        assert!(back[0].1.bit_eq(&a));
        assert!(read_checkpoint(ESTIMATOR_MAGIC, &bytes).is_err());
        assert!(read_checkpoint(MODEL_MAGIC, &bytes[..bytes.len() - 1]).is_err());
    }
}
