//! `TNSR` tensor files.
//!
//! Layout (little-endian): magic `TNSR`, u32 version, u32 rank, `rank` u32
//! dims, then the row-major payload. Version 1 stores `f32` values (fixture
//! files, widened to `f64` on load); version 2 stores `f64` values and is used
//! inside checkpoints where round-trips must be bit-exact.

use std::path::Path;

use super::TensorF;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TNSR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32 = 1,
    F64 = 2,
}

pub fn encode(t: &TensorF, precision: Precision) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * t.rank() + 8 * t.numel());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(precision as u32).to_le_bytes());
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    match precision {
        Precision::F32 => t.data().iter().for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
        Precision::F64 => t.data().iter().for_each(|&v| out.extend_from_slice(&v.to_le_bytes())),
    }
    out
}

pub(crate) struct Reader<'a> {
    pub buf: &'a [u8],
    pub pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(
                self.buf.len(),
                format!("truncated {what}: need {n} bytes at offset {}", self.pos),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub fn magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let at = self.pos;
        let got = self.take(4, "magic")?;
        if got != magic {
            return Err(Error::format(
                at,
                format!("bad magic {:?}, expected {:?}", String::from_utf8_lossy(got), String::from_utf8_lossy(magic)),
            ));
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.pos == self.buf.len()
    }
}

pub(crate) fn read_from(r: &mut Reader<'_>) -> Result<TensorF> {
    r.magic(MAGIC)?;
    let at = r.pos;
    let version = r.u32("version")?;
    let width = match version {
        1 => 4,
        2 => 8,
        v => return Err(Error::format(at, format!("unsupported TNSR version {v}"))),
    };
    let rank = r.u32("rank")? as usize;
    if rank == 0 {
        return Err(Error::format(at + 4, "rank must be >= 1"));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let at = r.pos;
        let d = r.u32("dim")? as usize;
        if d == 0 {
            return Err(Error::format(at, "zero dimension"));
        }
        shape.push(d);
    }
    let n = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::format(r.pos, "shape overflows"))?;
    let bytes = r.take(n.checked_mul(width).ok_or_else(|| Error::format(r.pos, "payload overflows"))?, "payload")?;
    let data = if width == 4 {
        bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect()
    } else {
        bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect()
    };
    TensorF::new(shape, data)
}

pub fn decode(bytes: &[u8]) -> Result<TensorF> {
    let mut r = Reader::new(bytes);
    let t = read_from(&mut r)?;
    if !r.is_empty() {
        return Err(Error::format(r.pos, "trailing bytes after tensor"));
    }
    Ok(t)
}

pub fn write_file(path: impl AsRef<Path>, t: &TensorF, precision: Precision) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(t, precision)).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: impl AsRef<Path>) -> Result<TensorF> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f32_header_layout() {
        let t = TensorF::new(vec![2, 1], vec![1.5, -2.0]).unwrap();
        let b = encode(&t, Precision::F32);
        assert_eq!(&b[..4], b"TNSR");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 2);
        assert_eq!(b.len(), 12 + 8 + 8);
        assert_eq!(decode(&b).unwrap(), t);
    }

    #[test]
    fn f64_roundtrip_is_bit_exact() {
        let t = TensorF::new(vec![3], vec![0.1, 1.0 / 3.0, -7e-300]).unwrap();
        let back = decode(&encode(&t, Precision::F64)).unwrap();
        assert_eq!(back.bits(), t.bits());
    }

    #[test]
    fn truncated_payload_reports_offset() {
        let t = TensorF::zeros(&[4]);
        let b = encode(&t, Precision::F32);
        let err = decode(&b[..b.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err}");
        let err = decode(b"TNSX").unwrap_err();
        assert!(matches!(err, Error::Format { offset: 0, .. }));
    }
}
