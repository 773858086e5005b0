//! Binary parameter checkpoints.
//!
//! Layout, all integers little-endian: magic `STTC`, version `u32`, entry
//! count `u32`, then per entry the name length `u32`, UTF-8 name, frozen flag
//! `u8`, rank `u64`, each dim `u64` and the data as `f32`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::params::NamedParam;
use crate::tensor::{Real, Tensor};

pub const MAGIC: &[u8; 4] = b"STTC";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub name: String,
    pub frozen: bool,
    pub tensor: Tensor<f32>,
}

pub fn encode<F: Real>(params: &[NamedParam<'_, F>]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.push(p.frozen as u8);
        out.extend_from_slice(&(p.tensor.rank() as u64).to_le_bytes());
        for &d in p.tensor.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in p.tensor.data() {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
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
        let end = end.ok_or_else(|| Error::Format(format!("checkpoint truncated at byte {}", self.pos)))?;
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

    fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| Error::Format(format!("size {v} does not fit in memory")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<Entry>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let count = r.u32()?;
    let mut entries = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|e| Error::Format(format!("entry name is not UTF-8: {e}")))?
            .to_string();
        let frozen = match r.take(1)?[0] {
            0 => false,
            1 => true,
            b => return Err(Error::Format(format!("{name}: frozen flag {b}"))),
        };
        let rank = r.usize()?;
        let shape = (0..rank).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
        let numel = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::Format(format!("{name}: shape {shape:?} overflows")))?;
        let raw = r.take(numel.checked_mul(4).ok_or_else(|| Error::Format(format!("{name}: too large")))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        entries.push(Entry { name, frozen, tensor: Tensor::new(shape, data)? });
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes after checkpoint", bytes.len() - r.pos)));
    }
    Ok(entries)
}

pub fn save<F: Real>(model: &Model<F>, path: &Path) -> Result<()> {
    std::fs::write(path, encode(&model.params())).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Vec<Entry>> {
    decode(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Overwrite every parameter of `model` from `entries`. Entries must cover
/// the model exactly, with matching frozen flags.
pub fn restore<F: Real>(model: &mut Model<F>, entries: &[Entry]) -> Result<()> {
    let expected: Vec<(String, bool)> = model.params().iter().map(|p| (p.name.to_string(), p.frozen)).collect();
    let found: Vec<(String, bool)> = entries.iter().map(|e| (e.name.clone(), e.frozen)).collect();
    if expected != found {
        return Err(Error::Format(format!(
            "checkpoint holds {} entries that do not match the model's {}",
            found.len(),
            expected.len()
        )));
    }
    for e in entries {
        model.set_param(&e.name, e.tensor.cast())?;
    }
    Ok(())
}
