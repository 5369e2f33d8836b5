//! Single-file model checkpoints.
//!
//! Layout: 8-byte magic `MIMICCKP`, little-endian `u32` format version,
//! `u32` header length, a JSON header, then every tensor's values as
//! little-endian `f64` in header order. Values round-trip bit-exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::mat::Mat;
use super::tape::Params;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"MIMICCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    kind: String,
    config: Value,
    tensors: Vec<TensorEntry>,
}

/// Tensors plus a free-form JSON config, tagged with a model kind.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub config: Value,
    pub tensors: Params,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            kind: self.kind.clone(),
            config: self.config.clone(),
            tensors: self
                .tensors
                .names
                .iter()
                .zip(&self.tensors.values)
                .map(|(n, m)| TensorEntry { name: n.clone(), rows: m.rows, cols: m.cols })
                .collect(),
        };
        let head = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + head.len() + self.tensors.count() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(head.len() as u32).to_le_bytes());
        out.extend_from_slice(&head);
        for m in &self.tensors.values {
            for v in &m.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let hlen = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let body = bytes.get(16..16 + hlen).ok_or_else(|| Error::Checkpoint("truncated header".into()))?;
        let header: Header = serde_json::from_slice(body)?;
        let mut pos = 16 + hlen;
        let mut tensors = Params::default();
        for t in header.tensors {
            let n = t.rows * t.cols;
            let raw = bytes
                .get(pos..pos + n * 8)
                .ok_or_else(|| Error::Checkpoint(format!("truncated tensor `{}`", t.name)))?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            tensors.add(t.name, Mat::from_vec(t.rows, t.cols, data));
            pos += n * 8;
        }
        if pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(Self { kind: header.kind, config: header.config, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Checkpoint(format!("expected a `{kind}` checkpoint, found `{}`", self.kind)));
        }
        Ok(())
    }

    /// Copies tensors into `params` by name, checking shapes.
    pub fn restore_into(&self, params: &mut Params) -> Result<()> {
        if params.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "tensor count {} does not match model ({})",
                self.tensors.len(),
                params.len()
            )));
        }
        for (name, m) in self.tensors.names.iter().zip(&self.tensors.values) {
            let id = params
                .position(name)
                .ok_or_else(|| Error::Checkpoint(format!("unknown tensor `{name}`")))?;
            let slot = &mut params.values[id.0];
            if !slot.same_shape(m) {
                return Err(Error::Checkpoint(format!("shape mismatch for `{name}`")));
            }
            *slot = m.clone();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_bit_exactly() {
        let mut p = Params::default();
        p.add("a", Mat::from_vec(2, 2, vec![0.1, -1e-300, f64::MAX, 1.0 / 3.0]));
        p.add("b", Mat::row_vector(vec![std::f64::consts::PI]));
        let ck = Checkpoint { kind: "test".into(), config: serde_json::json!({"h": 3}), tensors: p };
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        assert_eq!(back, ck);
        for (x, y) in back.tensors.values[0].data.iter().zip(&ck.tensors.values[0].data) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(Checkpoint::from_bytes(b"hello world, not a model").is_err());
    }
}
