//! The `.drnv` bitstream container.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! header  "DRNV" | version u8 | width u16 | height u16 | K u8 |
//!         C_0..C_{K-1} u16 | downsample u8 | gop u32 | frames u32 | crc32
//! record  type u8 (0 = I, 1 = P) | route u8 |
//!         len u32 | hyper chunk | (len u32 | group chunk) x (route + 1) | crc32
//! ```
//!
//! Each CRC covers the bytes of its header or record, so any single corrupted
//! byte is reported rather than decoded.

use crate::dra::RouteSpec;
use crate::{Error, Result};

pub const CONTAINER_MAGIC: [u8; 4] = *b"DRNV";
pub const CONTAINER_VERSION: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameType {
    I,
    P,
}

impl FrameType {
    pub fn as_str(self) -> &'static str {
        match self {
            FrameType::I => "I",
            FrameType::P => "P",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContainerHeader {
    pub width: usize,
    pub height: usize,
    pub latent_channels: Vec<usize>,
    pub downsample_factor: usize,
    pub gop: usize,
}

impl ContainerHeader {
    pub fn routes(&self) -> usize {
        self.latent_channels.len()
    }

    /// Whether a model with `spec` can decode this stream.
    pub fn check_model(&self, spec: &RouteSpec) -> Result<()> {
        if self.latent_channels != spec.latent_channels || self.downsample_factor != spec.downsample_factor {
            return Err(Error::Format(format!(
                "stream was coded with channels {:?} / downsample {}, model has {:?} / {}",
                self.latent_channels, self.downsample_factor, spec.latent_channels, spec.downsample_factor
            )));
        }
        spec.check_frame_dims(self.height, self.width)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameRecord {
    pub frame_type: FrameType,
    pub route: usize,
    /// Hyper chunk, then `route + 1` group chunks.
    pub chunks: Vec<Vec<u8>>,
}

impl FrameRecord {
    pub fn payload_bits(&self) -> usize {
        super::codec::payload_bits(&self.chunks)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitstreamContainer {
    pub header: ContainerHeader,
    pub frames: Vec<FrameRecord>,
}

fn put_u16(out: &mut Vec<u8>, v: usize, what: &str) -> Result<()> {
    let v = u16::try_from(v).map_err(|_| Error::invalid(format!("{what} {v} does not fit 16 bits")))?;
    out.extend(v.to_le_bytes());
    Ok(())
}

fn put_u8(out: &mut Vec<u8>, v: usize, what: &str) -> Result<()> {
    out.push(u8::try_from(v).map_err(|_| Error::invalid(format!("{what} {v} does not fit 8 bits")))?);
    Ok(())
}

fn put_u32(out: &mut Vec<u8>, v: usize, what: &str) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::invalid(format!("{what} {v} does not fit 32 bits")))?;
    out.extend(v.to_le_bytes());
    Ok(())
}

fn seal(out: &mut Vec<u8>, start: usize) {
    let crc = crc32fast::hash(&out[start..]);
    out.extend(crc.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

/// Ran out of bytes; the caller knows which part was being read.
struct Short;

impl Reader<'_> {
    fn take(&mut self, n: usize) -> std::result::Result<&[u8], Short> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(Short)?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> std::result::Result<usize, Short> {
        Ok(self.take(1)?[0] as usize)
    }

    fn u16(&mut self) -> std::result::Result<usize, Short> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]) as usize)
    }

    fn u32(&mut self) -> std::result::Result<usize, Short> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn check_crc(&mut self, start: usize) -> std::result::Result<bool, Short> {
        let expected = crc32fast::hash(&self.bytes[start..self.pos]);
        Ok(self.u32()? as u32 == expected)
    }
}

impl BitstreamContainer {
    pub fn payload_bits(&self) -> usize {
        self.frames.iter().map(FrameRecord::payload_bits).sum()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let h = &self.header;
        let mut out = CONTAINER_MAGIC.to_vec();
        out.push(CONTAINER_VERSION);
        put_u16(&mut out, h.width, "width")?;
        put_u16(&mut out, h.height, "height")?;
        put_u8(&mut out, h.routes(), "route count")?;
        for &c in &h.latent_channels {
            put_u16(&mut out, c, "channel count")?;
        }
        put_u8(&mut out, h.downsample_factor, "downsample factor")?;
        put_u32(&mut out, h.gop, "GoP length")?;
        put_u32(&mut out, self.frames.len(), "frame count")?;
        seal(&mut out, 0);
        for (t, f) in self.frames.iter().enumerate() {
            if f.route >= h.routes() || f.chunks.len() != f.route + 2 {
                return Err(Error::invalid(format!(
                    "frame {t}: route {} with {} chunks in a {}-route stream",
                    f.route,
                    f.chunks.len(),
                    h.routes()
                )));
            }
            let start = out.len();
            out.push(match f.frame_type {
                FrameType::I => 0,
                FrameType::P => 1,
            });
            out.push(f.route as u8);
            for c in &f.chunks {
                put_u32(&mut out, c.len(), "chunk length")?;
                out.extend(c);
            }
            seal(&mut out, start);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let header_short = |_| Error::Format("truncated container header".into());
        if r.take(4).map_err(header_short)? != CONTAINER_MAGIC {
            return Err(Error::Format("not a DRNV bitstream (bad magic)".into()));
        }
        let version = r.u8().map_err(header_short)?;
        if version != CONTAINER_VERSION as usize {
            return Err(Error::Format(format!("unsupported container version {version}")));
        }
        let width = r.u16().map_err(header_short)?;
        let height = r.u16().map_err(header_short)?;
        let k = r.u8().map_err(header_short)?;
        let latent_channels = (0..k).map(|_| r.u16()).collect::<std::result::Result<Vec<_>, _>>().map_err(header_short)?;
        let downsample_factor = r.u8().map_err(header_short)?;
        let gop = r.u32().map_err(header_short)?;
        let n_frames = r.u32().map_err(header_short)?;
        if !r.check_crc(0).map_err(header_short)? {
            return Err(Error::corrupt(r.pos, "header checksum mismatch"));
        }
        if k == 0 || gop == 0 {
            return Err(Error::Format(format!("header declares {k} routes and GoP {gop}")));
        }
        let header = ContainerHeader {
            width,
            height,
            latent_channels,
            downsample_factor,
            gop,
        };
        let mut frames = Vec::with_capacity(n_frames.min(1 << 16));
        for t in 0..n_frames {
            let truncated = |_| {
                Error::Format(match t {
                    0 => "stream truncated inside frame 0; no complete frame".to_string(),
                    _ => format!("stream truncated inside frame {t}; last complete frame is {}", t - 1),
                })
            };
            let start = r.pos;
            let frame_type = match r.u8().map_err(truncated)? {
                0 => FrameType::I,
                1 => FrameType::P,
                b => return Err(Error::corrupt(start, format!("frame {t}: unknown frame type {b}"))),
            };
            let route = r.u8().map_err(truncated)?;
            if route >= k {
                return Err(Error::corrupt(start + 1, format!("frame {t}: route {route} with K = {k}")));
            }
            let mut chunks = Vec::with_capacity(route + 2);
            for _ in 0..route + 2 {
                let len = r.u32().map_err(truncated)?;
                chunks.push(r.take(len).map_err(truncated)?.to_vec());
            }
            if !r.check_crc(start).map_err(truncated)? {
                return Err(Error::corrupt(start, format!("frame {t}: record checksum mismatch")));
            }
            frames.push(FrameRecord { frame_type, route, chunks });
        }
        if r.pos != bytes.len() {
            return Err(Error::corrupt(r.pos, format!("{} bytes after the last frame", bytes.len() - r.pos)));
        }
        Ok(BitstreamContainer { header, frames })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> BitstreamContainer {
        BitstreamContainer {
            header: ContainerHeader {
                width: 64,
                height: 32,
                latent_channels: vec![6, 12, 18, 24],
                downsample_factor: 8,
                gop: 32,
            },
            frames: vec![
                FrameRecord {
                    frame_type: FrameType::I,
                    route: 3,
                    chunks: vec![vec![1, 2], vec![3], vec![], vec![4, 5, 6], vec![7]],
                },
                FrameRecord {
                    frame_type: FrameType::P,
                    route: 0,
                    chunks: vec![vec![9], vec![8, 8]],
                },
            ],
        }
    }

    #[test]
    fn round_trip() {
        let c = sample();
        let bytes = c.to_bytes().unwrap();
        assert_eq!(BitstreamContainer::from_bytes(&bytes).unwrap(), c);
        assert_eq!(c.payload_bits(), 10 * 8);
    }

    #[test]
    fn every_single_byte_change_is_detected() {
        let bytes = sample().to_bytes().unwrap();
        for i in 0..bytes.len() {
            for flip in [0x01u8, 0x80, 0xff] {
                let mut b = bytes.clone();
                b[i] ^= flip;
                assert!(BitstreamContainer::from_bytes(&b).is_err(), "byte {i} ^ {flip:#x} passed");
            }
        }
    }

    #[test]
    fn truncation_names_the_last_complete_frame() {
        let bytes = sample().to_bytes().unwrap();
        let msg = BitstreamContainer::from_bytes(&bytes[..bytes.len() - 2]).unwrap_err().to_string();
        assert!(msg.contains("last complete frame is 0"), "{msg}");
        let mut padded = bytes.clone();
        padded.push(0);
        assert!(BitstreamContainer::from_bytes(&padded).is_err());
        let mut v2 = bytes;
        v2[4] = 2;
        assert!(BitstreamContainer::from_bytes(&v2).unwrap_err().to_string().contains("version"));
    }
}
