//! `PCGM` model container.
//!
//! ```text
//! "PCGM" | version u16 | kind u8 | block count u32
//! per block: name len u16 | name | rank u8 | dims u32 × rank | values f32 × Π dims
//! CRC32 u32 of every preceding byte
//! ```
//! All integers and floats are little-endian.

use super::EnsembleError;
use crate::util::{ByteCursor, Truncated};

pub const MAGIC: &[u8; 4] = b"PCGM";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub name: String,
    pub dims: Vec<usize>,
    pub values: Vec<f32>,
}

impl Block {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, values: Vec<f32>) -> Result<Self, EnsembleError> {
        let name = name.into();
        if dims.iter().product::<usize>() != values.len() {
            return Err(EnsembleError::Format(format!("block {name}: {} values for dims {dims:?}", values.len())));
        }
        if name.len() > u16::MAX as usize || dims.len() > u8::MAX as usize || dims.iter().any(|&d| d > u32::MAX as usize) {
            return Err(EnsembleError::Format(format!("block {name} does not fit the container limits")));
        }
        Ok(Block { name, dims, values })
    }

    pub fn from_f64(name: impl Into<String>, dims: Vec<usize>, values: &[f64]) -> Result<Self, EnsembleError> {
        Self::new(name, dims, values.iter().map(|&v| v as f32).collect())
    }

    pub fn values_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: u8,
    pub blocks: Vec<Block>,
}

impl Container {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(self.kind);
        out.extend_from_slice(&(self.blocks.len() as u32).to_le_bytes());
        for b in &self.blocks {
            out.extend_from_slice(&(b.name.len() as u16).to_le_bytes());
            out.extend_from_slice(b.name.as_bytes());
            out.push(b.dims.len() as u8);
            for &d in &b.dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in &b.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EnsembleError> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(EnsembleError::Magic);
        }
        let mut cur = ByteCursor::new(&bytes[4..]);
        let version = cur.u16().map_err(trunc)?;
        if version != FORMAT_VERSION {
            return Err(EnsembleError::Version { found: version, supported: FORMAT_VERSION });
        }
        if bytes.len() < 4 + 2 + 1 + 4 + 4 {
            return Err(EnsembleError::Integrity("file truncated".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(EnsembleError::Integrity(format!("checksum {stored:08x} != computed {computed:08x}")));
        }

        let mut cur = ByteCursor::new(&body[6..]);
        let kind = cur.u8().map_err(trunc)?;
        let n = cur.u32().map_err(trunc)? as usize;
        let mut blocks = Vec::with_capacity(n.min(4096));
        for _ in 0..n {
            let len = cur.u16().map_err(trunc)? as usize;
            let name = std::str::from_utf8(cur.take(len).map_err(trunc)?)
                .map_err(|_| EnsembleError::Format("block name is not UTF-8".into()))?
                .to_string();
            let rank = cur.u8().map_err(trunc)? as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(cur.u32().map_err(trunc)? as usize);
            }
            let count = dims
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| EnsembleError::Format(format!("block {name}: dims overflow")))?;
            let raw = cur.take(count.checked_mul(4).ok_or_else(|| EnsembleError::Format("block too large".into()))?);
            let raw = raw.map_err(trunc)?;
            let values = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            blocks.push(Block { name, dims, values });
        }
        if !cur.is_empty() {
            return Err(EnsembleError::Format("trailing bytes after the last block".into()));
        }
        Ok(Container { kind, blocks })
    }

    pub fn get(&self, name: &str) -> Result<&Block, EnsembleError> {
        self.blocks
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| EnsembleError::Format(format!("missing block {name}")))
    }
}

fn trunc(_: Truncated) -> EnsembleError {
    EnsembleError::Integrity("block table runs past the end of the file".into())
}
