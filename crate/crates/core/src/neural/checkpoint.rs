//! Binary checkpoints.
//!
//! ```text
//! magic   "MFUS"                      4 bytes
//! version u32 LE                      currently 1
//! digest  u64 LE                      FNV-1a of the architecture JSON
//! arch    u32 LE length + UTF-8 JSON  the ModelSpec
//! count   u32 LE                      number of tensors
//! tensor  u64 LE length + f64 LE × length, repeated `count` times
//! ```
//!
//! Tensors appear in [`FusionModel::trainable`] order followed by the
//! batch-norm running statistics in [`FusionModel::running_stats`] order.

use std::path::Path;

use super::model::{FusionModel, ModelSpec};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::rng::{tag, SeededRng};

pub const MAGIC: &[u8; 4] = b"MFUS";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn spec_digest(spec: &ModelSpec) -> u64 {
    tag(&spec.to_json())
}

pub fn encode(model: &FusionModel) -> Vec<u8> {
    let arch = model.spec.to_json();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&tag(&arch).to_le_bytes());
    out.extend_from_slice(&(arch.len() as u32).to_le_bytes());
    out.extend_from_slice(arch.as_bytes());
    let tensors: Vec<&[f64]> = model.trainable().into_iter().chain(model.running_stats()).collect();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.len() as u64).to_le_bytes());
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::format("checkpoint truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<FusionModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::format("not a checkpoint (bad magic)"));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(format!("unsupported checkpoint version {version}")));
    }
    let digest = r.u64()?;
    let len = r.u32()? as usize;
    let arch = std::str::from_utf8(r.take(len)?).map_err(|_| Error::format("checkpoint architecture is not UTF-8"))?;
    if tag(arch) != digest {
        return Err(Error::format("checkpoint architecture digest mismatch"));
    }
    let spec: ModelSpec =
        serde_json::from_str(arch).map_err(|e| Error::format(format!("checkpoint architecture: {e}")))?;
    let mut model = FusionModel::init(&spec, &mut SeededRng::new(0))?;
    let count = r.u32()? as usize;
    let expected = model.trainable().len() + model.running_stats().len();
    if count != expected {
        return Err(Error::format(format!("checkpoint has {count} tensors, architecture needs {expected}")));
    }
    let read_into = |dst: &mut [f64], r: &mut Reader<'_>| -> Result<()> {
        let n = r.u64()? as usize;
        if n != dst.len() {
            return Err(Error::format(format!("tensor of {n} values where {} expected", dst.len())));
        }
        for (d, chunk) in dst.iter_mut().zip(r.take(8 * n)?.chunks_exact(8)) {
            *d = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
        Ok(())
    };
    for t in model.trainable_mut() {
        read_into(t, &mut r)?;
    }
    for t in model.running_stats_mut() {
        read_into(t, &mut r)?;
    }
    if r.pos != bytes.len() {
        return Err(Error::format("trailing bytes after checkpoint tensors"));
    }
    Ok(model)
}

pub fn save(path: &Path, model: &FusionModel) -> Result<()> {
    fsutil::write_atomic(path, &encode(model))
}

pub fn load(path: &Path) -> Result<FusionModel> {
    decode(&fsutil::read_bytes(path)?).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}
