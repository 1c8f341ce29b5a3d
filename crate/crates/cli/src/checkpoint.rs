//! Binary checkpoint archive of named f64 tensors.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    "THG1"        4 bytes
//! version  u32           currently 1
//! count    u32
//! count × { name_len u32, name bytes (UTF-8), rank u32, dims u32 × rank, values f64 × Π dims }
//! ```

use std::fs;
use std::path::Path;

use thg_core::Tensor64;
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"THG1";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad checkpoint magic")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint truncated or malformed: {0}")]
    Malformed(String),
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
}

pub fn encode(tensors: &[(String, Tensor64)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| CheckpointError::Malformed(format!("need {n} bytes at offset {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Decodes a whole archive; nothing is returned unless every byte parses.
pub fn decode(buf: &[u8]) -> Result<Vec<(String, Tensor64)>, CheckpointError> {
    let mut r = Reader { buf, pos: 0 };
    if buf.len() < 4 || r.take(4)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let count = r.u32()?;
    let mut out = Vec::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| CheckpointError::Malformed("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32()? as usize;
        let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n.saturating_mul(8) <= buf.len())
            .ok_or_else(|| CheckpointError::Malformed(format!("tensor `{name}` has implausible shape {dims:?}")))?;
        let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        let t = Tensor64::new(dims, data).map_err(|e| CheckpointError::Malformed(format!("tensor `{name}`: {e}")))?;
        out.push((name, t));
    }
    if r.pos != buf.len() {
        return Err(CheckpointError::Malformed(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    Ok(out)
}

pub fn save(path: &Path, tensors: &[(String, Tensor64)]) -> Result<(), CheckpointError> {
    fs::write(path, encode(tensors))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Vec<(String, Tensor64)>, CheckpointError> {
    decode(&fs::read(path)?)
}
