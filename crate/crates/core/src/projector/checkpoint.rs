//! `ASRG` checkpoints: header, dims, variant, stage marker, then named
//! tensors in the double-precision `TNSR` layout so reloads are bit-exact.

use std::path::Path;

use super::{Dims, FusionKind, FusionVariant, ProjectorParams};
use crate::error::{Error, Result};
use crate::tensor::fixture::{self, Precision, Reader};
use crate::tensor::{Param, ParamStore};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ASRG";
pub const CHECKPOINT_VERSION: u32 = 1;

impl ProjectorParams {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for v in self.dims.as_array() {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.push(self.variant.kind.code());
        out.extend_from_slice(&self.variant.kind.alpha_init().to_le_bytes());
        out.push(u8::from(self.variant.use_segmaps));
        out.push(u8::from(self.stage1_complete));
        out.extend_from_slice(&(self.store.len() as u32).to_le_bytes());
        for (name, p) in self.store.iter() {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(u8::from(p.trainable));
            out.extend_from_slice(&fixture::encode(&p.value, Precision::F64));
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(CHECKPOINT_MAGIC)?;
        let at = r.pos;
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(at, format!("unsupported checkpoint version {version}")));
        }
        let mut dims = [0usize; 9];
        for d in &mut dims {
            *d = r.u32("dims")? as usize;
        }
        let dims = Dims::from_array(dims);
        let at = r.pos;
        let code = r.u8("variant")?;
        let alpha_init = r.f64("alpha_init")?;
        let kind = FusionKind::from_code(code, alpha_init)
            .ok_or_else(|| Error::format(at, format!("unknown variant code {code}")))?;
        let use_segmaps = flag(&mut r, "use_segmaps")?;
        let stage1_complete = flag(&mut r, "stage marker")?;
        let n = r.u32("entry count")?;
        let mut store = ParamStore::new();
        for _ in 0..n {
            let len = r.u32("name length")? as usize;
            let at = r.pos;
            let name = std::str::from_utf8(r.take(len, "name")?)
                .map_err(|_| Error::format(at, "parameter name is not UTF-8"))?
                .to_string();
            let trainable = flag(&mut r, "trainable flag")?;
            let value = fixture::read_from(&mut r)?;
            store.insert_param(name, Param { value, trainable });
        }
        if !r.is_empty() {
            return Err(Error::format(r.pos, "trailing bytes after checkpoint"));
        }
        dims.validate()?;
        let variant = FusionVariant::new(kind, use_segmaps)?;
        let p = Self { dims, variant, store, stage1_complete };
        p.check_shapes()?;
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

fn flag(r: &mut Reader<'_>, what: &str) -> Result<bool> {
    let at = r.pos;
    match r.u8(what)? {
        0 => Ok(false),
        1 => Ok(true),
        v => Err(Error::format(at, format!("{what} must be 0 or 1, got {v}"))),
    }
}
