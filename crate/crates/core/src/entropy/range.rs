//! Byte-oriented range coder with 16-bit frequency tables.
//!
//! 32-bit range, carry propagation through a cached byte and a run of pending
//! `0xFF` bytes. The first byte such coders emit is always zero and is left
//! implicit. The final flush writes only the bytes needed to pin a value
//! inside the last interval and drops trailing zero bytes; the decoder reads
//! zeros past the end, so a well-formed stream never ends in `0x00`.

use super::cdf::{CdfTable, CDF_PRECISION};
use crate::{Error, Result};

const TOP: u32 = 1 << 24;

pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    pending: u64,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        RangeEncoder {
            low: 0,
            range: u32::MAX,
            cache: 0,
            pending: 1,
            out: Vec::new(),
        }
    }

    fn shift_low(&mut self) {
        if (self.low as u32) < 0xFF00_0000 || self.low >= 1 << 32 {
            let carry = (self.low >> 32) as u8;
            let mut byte = self.cache;
            while self.pending > 0 {
                self.out.push(byte.wrapping_add(carry));
                byte = 0xFF;
                self.pending -= 1;
            }
            self.cache = ((self.low >> 24) & 0xFF) as u8;
        }
        self.pending += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    fn normalize(&mut self) {
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    /// Encode the interval `[cum, cum + freq)` out of `2^16`.
    pub fn encode(&mut self, cum: u32, freq: u32) {
        debug_assert!(freq > 0 && cum + freq <= 1 << CDF_PRECISION);
        let r = self.range >> CDF_PRECISION;
        self.low += u64::from(r) * u64::from(cum);
        self.range = r * freq;
        self.normalize();
    }

    /// Encode 16 raw bits.
    pub fn encode_raw16(&mut self, v: u16) {
        self.encode(u32::from(v), 1);
    }

    pub fn finish(mut self) -> Vec<u8> {
        let end = self.low + u64::from(self.range);
        let mut chosen = (self.low, 4);
        for nbytes in 1..=4u32 {
            let unit = 1u64 << (32 - 8 * nbytes);
            let v = (self.low + unit - 1) & !(unit - 1);
            if v < end {
                chosen = (v, nbytes);
                break;
            }
        }
        self.low = chosen.0;
        for _ in 0..=chosen.1 {
            self.shift_low();
        }
        let mut out = self.out;
        debug_assert_eq!(out.first(), Some(&0));
        out.remove(0);
        while out.last() == Some(&0) {
            out.pop();
        }
        out
    }
}

pub struct RangeDecoder<'a> {
    data: &'a [u8],
    pos: usize,
    code: u32,
    range: u32,
    r: u32,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(data: &'a [u8]) -> Result<Self> {
        if data.last() == Some(&0) {
            return Err(Error::corrupt(data.len() - 1, "stream ends in a zero byte"));
        }
        let mut d = RangeDecoder {
            data,
            pos: 0,
            code: 0,
            range: u32::MAX,
            r: 0,
        };
        for _ in 0..4 {
            d.code = (d.code << 8) | u32::from(d.next_byte());
        }
        Ok(d)
    }

    fn next_byte(&mut self) -> u8 {
        let b = self.data.get(self.pos).copied().unwrap_or(0);
        self.pos += 1;
        b
    }

    /// Target count for the next symbol, in `[0, 2^16)`.
    pub fn target(&mut self) -> Result<u32> {
        self.r = self.range >> CDF_PRECISION;
        let v = self.code / self.r;
        if v >= 1 << CDF_PRECISION {
            return Err(Error::corrupt(self.pos.min(self.data.len()), "code value outside the coding range"));
        }
        Ok(v)
    }

    /// Remove the decoded interval; must follow [`RangeDecoder::target`].
    pub fn consume(&mut self, cum: u32, freq: u32) {
        self.code -= self.r * cum;
        self.range = self.r * freq;
        while self.range < TOP {
            self.code = (self.code << 8) | u32::from(self.next_byte());
            self.range <<= 8;
        }
    }

    pub fn decode_raw16(&mut self) -> Result<u16> {
        let v = self.target()?;
        self.consume(v, 1);
        Ok(v as u16)
    }

    /// Check that no bytes were left unread.
    pub fn finish(self) -> Result<()> {
        if self.data.len() > self.pos {
            return Err(Error::corrupt(self.pos, format!("{} unread trailing bytes", self.data.len() - self.pos)));
        }
        Ok(())
    }
}

/// Range-code `symbols`, each under its own table. Values outside a table's
/// support are sent as the escape symbol followed by 16 raw bits.
pub fn rc_encode(symbols: &[i32], cdfs: &[CdfTable]) -> Result<Vec<u8>> {
    if symbols.len() != cdfs.len() {
        return Err(Error::invalid(format!("{} symbols but {} tables", symbols.len(), cdfs.len())));
    }
    let mut enc = RangeEncoder::new();
    for (i, (&s, t)) in symbols.iter().zip(cdfs).enumerate() {
        match t.index_of(s) {
            Some(idx) => {
                let (c, f) = t.interval(idx);
                enc.encode(c, f);
            }
            None => {
                let raw = i16::try_from(s)
                    .map_err(|_| Error::invalid(format!("symbol {i} = {s} exceeds the 16-bit escape range")))?;
                let (c, f) = t.interval(t.escape_index());
                enc.encode(c, f);
                enc.encode_raw16(raw as u16);
            }
        }
    }
    Ok(enc.finish())
}

pub fn rc_decode(bytes: &[u8], cdfs: &[CdfTable]) -> Result<Vec<i32>> {
    let mut dec = RangeDecoder::new(bytes)?;
    let mut out = Vec::with_capacity(cdfs.len());
    for t in cdfs {
        let target = dec.target()?;
        let idx = t.find(target);
        let (c, f) = t.interval(idx);
        dec.consume(c, f);
        if idx == t.escape_index() {
            let v = i32::from(dec.decode_raw16()? as i16);
            if t.index_of(v).is_some() {
                return Err(Error::corrupt(dec.pos.min(bytes.len()), format!("escaped value {v} lies inside the support")));
            }
            out.push(v);
        } else {
            out.push(t.value_of(idx));
        }
    }
    dec.finish()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::cdf::gaussian_cdf;
    use crate::numerics::SeedStream;
    use rand::Rng;

    fn uniform_table(n: usize) -> CdfTable {
        CdfTable::from_masses(0, &vec![1.0 / n as f64; n])
    }

    #[test]
    fn empty_sequence_round_trips() {
        let bytes = rc_encode(&[], &[]).unwrap();
        assert!(bytes.is_empty());
        assert_eq!(rc_decode(&bytes, &[]).unwrap(), Vec::<i32>::new());
    }

    #[test]
    fn uniform_byte_alphabet_costs_eight_bits() {
        let mut rng = SeedStream::new(1).stream("uniform");
        let t = uniform_table(256);
        let syms: Vec<i32> = (0..1000).map(|_| rng.random_range(0..256)).collect();
        let cdfs = vec![t; 1000];
        let bytes = rc_encode(&syms, &cdfs).unwrap();
        assert!((1000..=1030).contains(&bytes.len()), "{}", bytes.len());
        assert_eq!(rc_decode(&bytes, &cdfs).unwrap(), syms);
    }

    #[test]
    fn escapes_round_trip() {
        let t = gaussian_cdf(0.0, 0.5);
        let syms = vec![0, 40, -3000, 1, 32767, -32768, 0];
        let cdfs = vec![t; syms.len()];
        let bytes = rc_encode(&syms, &cdfs).unwrap();
        assert_eq!(rc_decode(&bytes, &cdfs).unwrap(), syms);
        assert!(rc_encode(&[40000], &cdfs[..1]).is_err());
    }

    #[test]
    fn trailing_garbage_is_rejected() {
        let t = uniform_table(7);
        let syms = vec![3, 1, 4, 1, 5];
        let cdfs = vec![t; 5];
        let mut bytes = rc_encode(&syms, &cdfs).unwrap();
        bytes.extend_from_slice(&[1, 2, 3, 4, 5, 6]);
        assert!(rc_decode(&bytes, &cdfs).is_err());
    }
}
