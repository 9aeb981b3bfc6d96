//! Versioned flat parameter container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "SLACCKPT"                      8-byte magic
//! u32 version                     currently 1
//! u32 meta_len, meta_len bytes    UTF-8 JSON metadata object
//! u32 n_arrays                    shape table follows
//!   u16 name_len, name bytes, u8 ndim, ndim x u64 dims
//! f64 data                        every array in table order
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use super::matrix::Matrix;
use super::mlp::{Linear, Mlp};
use crate::error::{Result, SlacError};

pub const MAGIC: &[u8; 8] = b"SLACCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub metadata: BTreeMap<String, serde_json::Value>,
    pub arrays: Vec<NamedArray>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_meta(&mut self, key: &str, value: impl Into<serde_json::Value>) {
        self.metadata.insert(key.to_string(), value.into());
    }

    pub fn meta(&self, key: &str) -> Result<&serde_json::Value> {
        self.metadata
            .get(key)
            .ok_or_else(|| SlacError::Checkpoint(format!("metadata key `{key}` missing")))
    }

    pub fn meta_u64(&self, key: &str) -> Result<u64> {
        self.meta(key)?
            .as_u64()
            .ok_or_else(|| SlacError::Checkpoint(format!("metadata key `{key}` is not an integer")))
    }

    pub fn meta_str(&self, key: &str) -> Result<&str> {
        self.meta(key)?
            .as_str()
            .ok_or_else(|| SlacError::Checkpoint(format!("metadata key `{key}` is not a string")))
    }

    pub fn push(&mut self, name: &str, shape: Vec<usize>, data: Vec<f64>) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.arrays.push(NamedArray {
            name: name.to_string(),
            shape,
            data,
        });
    }

    pub fn push_mlp(&mut self, prefix: &str, net: &Mlp) {
        for (i, l) in net.layers.iter().enumerate() {
            self.push(
                &format!("{prefix}.{i}.weight"),
                vec![l.weight.rows, l.weight.cols],
                l.weight.data.clone(),
            );
            self.push(&format!("{prefix}.{i}.bias"), vec![l.bias.len()], l.bias.clone());
        }
    }

    pub fn array(&self, name: &str) -> Result<&NamedArray> {
        self.arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| SlacError::Checkpoint(format!("array `{name}` missing")))
    }

    pub fn mlp(&self, prefix: &str) -> Result<Mlp> {
        let mut layers = Vec::new();
        let mut i = 0;
        while let Ok(w) = self.array(&format!("{prefix}.{i}.weight")) {
            let b = self.array(&format!("{prefix}.{i}.bias"))?;
            if w.shape.len() != 2 || b.shape.len() != 1 || b.shape[0] != w.shape[1] {
                return Err(SlacError::Checkpoint(format!("layer {prefix}.{i} has inconsistent shapes")));
            }
            layers.push(Linear {
                weight: Matrix {
                    rows: w.shape[0],
                    cols: w.shape[1],
                    data: w.data.clone(),
                },
                bias: b.data.clone(),
            });
            i += 1;
        }
        if layers.is_empty() {
            return Err(SlacError::Checkpoint(format!("no layers stored under `{prefix}`")));
        }
        Mlp::from_layers(layers).map_err(|e| SlacError::Checkpoint(e.to_string()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let meta = serde_json::to_vec(&self.metadata).expect("metadata serializes");
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for a in &self.arrays {
            out.extend_from_slice(&(a.name.len() as u16).to_le_bytes());
            out.extend_from_slice(a.name.as_bytes());
            out.push(a.shape.len() as u8);
            for d in &a.shape {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
        }
        for a in &self.arrays {
            for v in &a.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(SlacError::Checkpoint("bad magic; not a SLACCKPT file".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(SlacError::Checkpoint(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let meta_len = r.u32()? as usize;
        let metadata = serde_json::from_slice(r.take(meta_len)?)
            .map_err(|e| SlacError::Checkpoint(format!("metadata is not valid JSON: {e}")))?;
        let n = r.u32()? as usize;
        let mut table = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            let name_len = r.u16()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| SlacError::Checkpoint("array name is not UTF-8".into()))?;
            let ndim = r.take(1)?[0] as usize;
            let shape = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            table.push((name, shape));
        }
        let mut arrays = Vec::with_capacity(table.len());
        for (name, shape) in table {
            let len = shape
                .iter()
                .try_fold(1usize, |acc, d| acc.checked_mul(*d))
                .ok_or_else(|| SlacError::Checkpoint("shape overflow".into()))?;
            let raw = r.take(len.checked_mul(8).ok_or_else(|| SlacError::Checkpoint("shape overflow".into()))?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            arrays.push(NamedArray { name, shape, data });
        }
        if r.pos != bytes.len() {
            return Err(SlacError::Checkpoint(format!(
                "{} trailing bytes after array data",
                bytes.len() - r.pos
            )));
        }
        Ok(Checkpoint { metadata, arrays })
    }

    /// Write via a temporary sibling and rename, so readers never see a partial file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes())?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(SlacError::Checkpoint(format!(
                "truncated checkpoint: needed {n} bytes at offset {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
