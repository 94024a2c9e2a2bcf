//! Binary checkpoint: `PMBA`, version, header length, JSON header, raw
//! little-endian tensors, CRC32 of the tensor bytes.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::params::ParamStore;
use crate::tensor::{numel, DType, Element, Tensor};

pub const MAGIC: &[u8; 4] = b"PMBA";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub offset: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub model: ModelConfig,
    /// Free-form training snapshot (configuration, step, metrics).
    pub meta: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
}

/// A decoded checkpoint, tensors in stored order.
#[derive(Clone, Debug)]
pub struct Checkpoint<T: Element> {
    pub header: Header,
    pub tensors: Vec<(String, Tensor<T>)>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn encode<T: Element>(model: &ModelConfig, meta: &serde_json::Value, params: &ParamStore<T>) -> Result<Vec<u8>> {
    let mut payload = Vec::with_capacity(params.count() * T::DTYPE.size_of());
    let mut tensors = Vec::with_capacity(params.len());
    for (spec, v) in params.specs().iter().zip(params.values()) {
        tensors.push(TensorEntry {
            name: spec.name.clone(),
            dtype: T::DTYPE,
            shape: v.shape().to_vec(),
            offset: payload.len() as u64,
        });
        for &x in v.data() {
            x.write_le(&mut payload);
        }
    }
    let header = serde_json::to_vec(&Header {
        model: model.clone(),
        meta: meta.clone(),
        tensors,
    })?;
    let mut out = Vec::with_capacity(20 + header.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    Ok(out)
}

pub fn decode<T: Element>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    if bytes.len() < 20 || &bytes[..4] != MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(bad(format!("unsupported format version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| bad(format!("header: {e}")))?;
    let rest = &bytes[16 + hlen..];
    if rest.len() < 4 {
        return Err(bad("truncated payload"));
    }
    let (payload, crc) = rest.split_at(rest.len() - 4);
    let stored = u32::from_le_bytes(crc.try_into().expect("4 bytes"));
    if crc32fast::hash(payload) != stored {
        return Err(bad("CRC mismatch: payload is corrupted"));
    }
    let mut expect = 0u64;
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for e in &header.tensors {
        if e.dtype != T::DTYPE {
            return Err(bad(format!("tensor `{}` stored as {}, requested {}", e.name, e.dtype, T::DTYPE)));
        }
        if e.offset != expect || e.shape.contains(&0) {
            return Err(bad(format!("tensor `{}` has an inconsistent manifest entry", e.name)));
        }
        let n = numel(&e.shape);
        let size = n * T::DTYPE.size_of();
        let start = e.offset as usize;
        let raw = payload
            .get(start..start + size)
            .ok_or_else(|| bad(format!("tensor `{}` runs past the payload", e.name)))?;
        let data = raw.chunks_exact(T::DTYPE.size_of()).map(T::read_le).collect();
        tensors.push((e.name.clone(), Tensor::new(e.shape.clone(), data)?));
        expect += size as u64;
    }
    if expect as usize != payload.len() {
        return Err(bad("payload has trailing bytes"));
    }
    Ok(Checkpoint { header, tensors })
}

pub fn save<T: Element>(path: &Path, model: &ModelConfig, meta: &serde_json::Value, params: &ParamStore<T>) -> Result<()> {
    let bytes = encode(model, meta, params)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load<T: Element>(path: &Path) -> Result<Checkpoint<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

impl<T: Element> Checkpoint<T> {
    /// Copy every tensor into `params`. Fails without modifying anything
    /// on the first missing, extra or mis-shaped tensor.
    pub fn restore(self, params: &mut ParamStore<T>) -> Result<()> {
        let map: HashMap<String, Tensor<T>> = self.tensors.into_iter().collect();
        params.load_named(map)
    }
}
