use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::fixture::Reader;
use crate::tensor::TensorF;

pub const SSTK_MAGIC: &[u8; 4] = b"SSTK";
pub const SSTK_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

/// `n_cls` binary masks of `height x width`, bit-packed per class
/// (row-major, LSB first, each class padded to a whole byte).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskStack {
    n_cls: usize,
    height: usize,
    width: usize,
    bits: Vec<u8>,
}

impl MaskStack {
    pub fn empty(n_cls: usize, height: usize, width: usize) -> Self {
        let bytes = Self::bytes_per_class_for(height, width);
        Self { n_cls, height, width, bits: vec![0; n_cls * bytes] }
    }

    /// Build from one byte per pixel, class-major; any nonzero byte is foreground.
    pub fn from_pixels(n_cls: usize, height: usize, width: usize, pixels: &[u8]) -> Result<Self> {
        if pixels.len() != n_cls * height * width {
            return Err(Error::Config(format!(
                "expected {} pixels for {n_cls}x{height}x{width}, got {}",
                n_cls * height * width,
                pixels.len()
            )));
        }
        let mut stack = Self::empty(n_cls, height, width);
        let hw = height * width;
        for c in 0..n_cls {
            for k in 0..hw {
                if pixels[c * hw + k] != 0 {
                    stack.set_flat(c, k, true);
                }
            }
        }
        Ok(stack)
    }

    fn bytes_per_class_for(height: usize, width: usize) -> usize {
        (height * width).div_ceil(8)
    }

    pub fn bytes_per_class(&self) -> usize {
        Self::bytes_per_class_for(self.height, self.width)
    }

    pub fn n_cls(&self) -> usize {
        self.n_cls
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    fn locate(&self, class: usize, k: usize) -> (usize, u8) {
        assert!(class < self.n_cls && k < self.height * self.width, "mask index out of range");
        (class * self.bytes_per_class() + k / 8, 1u8 << (k % 8))
    }

    fn set_flat(&mut self, class: usize, k: usize, on: bool) {
        let (byte, bit) = self.locate(class, k);
        if on {
            self.bits[byte] |= bit;
        } else {
            self.bits[byte] &= !bit;
        }
    }

    pub fn get(&self, class: usize, y: usize, x: usize) -> bool {
        assert!(y < self.height && x < self.width, "pixel out of range");
        let (byte, bit) = self.locate(class, y * self.width + x);
        self.bits[byte] & bit != 0
    }

    pub fn set(&mut self, class: usize, y: usize, x: usize, on: bool) {
        assert!(y < self.height && x < self.width, "pixel out of range");
        self.set_flat(class, y * self.width + x, on);
    }

    pub fn class_bytes(&self, class: usize) -> &[u8] {
        let n = self.bytes_per_class();
        &self.bits[class * n..(class + 1) * n]
    }

    /// Foreground pixel count of one class.
    pub fn area(&self, class: usize) -> usize {
        self.class_bytes(class).iter().map(|b| b.count_ones() as usize).sum()
    }

    pub(crate) fn or_class_from(&mut self, dst: usize, src: &MaskStack, class: usize) {
        debug_assert_eq!((self.height, self.width), (src.height, src.width));
        let n = self.bytes_per_class();
        let from = src.class_bytes(class);
        for (d, s) in self.bits[dst * n..(dst + 1) * n].iter_mut().zip(from) {
            *d |= s;
        }
    }

    /// Output class `i` is input class `perm[i]`.
    pub fn permute_classes(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.n_cls, "permutation length");
        let mut bits = Vec::with_capacity(self.bits.len());
        for &p in perm {
            bits.extend_from_slice(self.class_bytes(p));
        }
        Self { bits, ..*self }
    }

    /// Dense `[n_cls, H, W]` tensor of 0/1 values.
    pub fn to_tensor(&self) -> TensorF {
        let hw = self.height * self.width;
        let mut data = Vec::with_capacity(self.n_cls * hw);
        for c in 0..self.n_cls {
            let bytes = self.class_bytes(c);
            data.extend((0..hw).map(|k| f64::from((bytes[k / 8] >> (k % 8)) & 1)));
        }
        TensorF::new(vec![self.n_cls, self.height, self.width], data).expect("mask tensor shape")
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.bits.len());
        out.extend_from_slice(SSTK_MAGIC);
        out.extend_from_slice(&SSTK_VERSION.to_le_bytes());
        for v in [self.n_cls, self.height, self.width] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.bits);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(SSTK_MAGIC)?;
        let version_at = r.pos;
        let version = r.u32("version")?;
        if version != SSTK_VERSION {
            return Err(Error::format(version_at, format!("unsupported SSTK version {version}")));
        }
        let n_cls = r.u32("n_cls")? as usize;
        let height = r.u32("height")? as usize;
        let width = r.u32("width")? as usize;
        let per_class = Self::bytes_per_class_for(height, width);
        let payload_at = r.pos;
        let bits = r.take(n_cls * per_class, "mask payload")?.to_vec();
        if !r.is_empty() {
            return Err(Error::format(r.pos, "trailing bytes after SSTK payload"));
        }
        let used = (height * width) % 8;
        if used != 0 {
            let pad_mask = !((1u8 << used) - 1);
            for c in 0..n_cls {
                let at = payload_at + (c + 1) * per_class - 1;
                if bytes[at] & pad_mask != 0 {
                    return Err(Error::format(at, "nonzero padding bits"));
                }
            }
        }
        Ok(Self { n_cls, height, width, bits })
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }
}
