//! Versioned binary container shared by checkpoints, the graph cache and the
//! embedding store.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"HIGF" | u32 version | u64 header_len | header JSON | f64 payload
//! ```
//!
//! The header names the container kind, carries free-form metadata and lists
//! each tensor's name, shape and offset (in `f64` elements) into the payload.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autograd::Mat;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"HIGF";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub kind: String,
    pub meta: serde_json::Value,
    pub tensors: Vec<(String, Mat)>,
}

impl Container {
    pub fn new(kind: impl Into<String>, meta: serde_json::Value) -> Self {
        Container {
            kind: kind.into(),
            meta,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, value: Mat) {
        self.tensors.push((name.into(), value));
    }

    pub fn tensor(&self, name: &str) -> Result<&Mat> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::Format(format!("{} container has no tensor {name:?}", self.kind)))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut offset = 0;
        let tensors = self
            .tensors
            .iter()
            .map(|(name, m)| {
                let e = TensorEntry {
                    name: name.clone(),
                    rows: m.nrows(),
                    cols: m.ncols(),
                    offset,
                };
                offset += m.len();
                e
            })
            .collect();
        let header = serde_json::to_vec(&Header {
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            tensors,
        })?;
        let mut out = Vec::with_capacity(16 + header.len() + 8 * offset);
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(header.len() as u64).to_le_bytes())?;
        out.write_all(&header)?;
        for (_, m) in &self.tensors {
            for x in m.iter() {
                out.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(Error::Format("missing container magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::Format(format!("unsupported container version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = bytes
            .get(16..16 + hlen)
            .ok_or_else(|| Error::Format("truncated container header".into()))?;
        let header: Header = serde_json::from_slice(body)?;
        let payload = &bytes[16 + hlen..];
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in header.tensors {
            let start = e.offset * 8;
            let end = start + e.rows * e.cols * 8;
            let raw = payload
                .get(start..end)
                .ok_or_else(|| Error::Format(format!("tensor {:?} truncated", e.name)))?;
            let data: Vec<f64> = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let m = Array2::from_shape_vec((e.rows, e.cols), data)
                .map_err(|err| Error::Format(err.to_string()))?;
            tensors.push((e.name, m));
        }
        Ok(Container {
            kind: header.kind,
            meta: header.meta,
            tensors,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes()?)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| {
            Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
        })?;
        Self::from_bytes(&bytes)
    }

    /// Reads and checks the kind.
    pub fn read_kind(path: &Path, kind: &str) -> Result<Self> {
        let c = Self::read(path)?;
        if c.kind != kind {
            return Err(Error::Format(format!(
                "{} holds a {} container, expected {kind}",
                path.display(),
                c.kind
            )));
        }
        Ok(c)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
