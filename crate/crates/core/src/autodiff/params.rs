//! Named parameter storage and the binary checkpoint format.
//!
//! Checkpoint layout:
//!
//! ```text
//! b"KSCKPT01" | u64 LE header length | JSON header | f32 LE payload
//! ```
//!
//! The JSON header records the run configuration, its SHA-256 hash, the RNG
//! seed and, per parameter, its name, shape and offset (in floats) into the
//! payload.

use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::graph::{Gradients, Graph, Var};
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"KSCKPT01";

/// Ordered map from parameter name to tensor.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<F: Real = f32> {
    params: IndexMap<String, Tensor<F>>,
}

/// Graph variables for every parameter of a store, valid for one graph.
#[derive(Clone, Debug)]
pub struct BoundParams {
    vars: IndexMap<String, Var>,
}

impl BoundParams {
    /// Binds names to variables that already live in a graph, e.g. leaves
    /// created by a gradient checker.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, Var)>) -> Self {
        BoundParams {
            vars: pairs.into_iter().collect(),
        }
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::invalid(format!("unknown parameter `{name}`")))
    }
}

impl<F: Real> ParamStore<F> {
    pub fn new() -> Self {
        ParamStore {
            params: IndexMap::new(),
        }
    }

    /// Registers a trainable tensor. Names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<F>) -> Result<()> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(Error::invalid(format!("duplicate parameter `{name}`")));
        }
        self.params.insert(name, t.with_requires_grad(true));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<F>> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<F>> {
        self.params.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<F>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<F>)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of trainable scalars.
    pub fn num_parameters(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    pub fn zero_grad(&mut self) {
        for t in self.params.values_mut() {
            t.zero_grad();
        }
    }

    /// Inserts every parameter as a gradient-tracking leaf of `graph`.
    pub fn bind(&self, graph: &mut Graph<F>) -> BoundParams {
        let vars = self
            .params
            .iter()
            .map(|(k, t)| (k.clone(), graph.leaf(t.clone())))
            .collect();
        BoundParams { vars }
    }

    /// Adds the gradients of a backward pass into each parameter's buffer.
    pub fn accumulate_grads(&mut self, bound: &BoundParams, grads: &Gradients<F>) -> Result<()> {
        for (name, var) in &bound.vars {
            if let (Some(t), Some(g)) = (self.params.get_mut(name), grads.get(*var)) {
                t.accumulate_grad(g)?;
            }
        }
        Ok(())
    }

    pub fn cast<G: Real>(&self) -> ParamStore<G> {
        ParamStore {
            params: self.params.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }

    /// SHA-256 over names, shapes and values (as f32 little-endian).
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (name, t) in &self.params {
            h.update(name.as_bytes());
            for d in t.shape() {
                h.update((*d as u64).to_le_bytes());
            }
            for v in t.data() {
                h.update((v.f64() as f32).to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: u32,
    pub seed: u64,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub params: Vec<ParamEntry>,
}

/// SHA-256 of the compact JSON rendering of `config` (object keys sorted).
pub fn config_hash(config: &serde_json::Value) -> String {
    let text = serde_json::to_string(config).expect("json value serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn encode_checkpoint<F: Real>(store: &ParamStore<F>, config: &serde_json::Value, seed: u64) -> Result<Vec<u8>> {
    let mut entries = Vec::with_capacity(store.len());
    let mut offset = 0;
    for (name, t) in store.iter() {
        entries.push(ParamEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            offset,
        });
        offset += t.numel();
    }
    let header = CheckpointHeader {
        format: 1,
        seed,
        config_hash: config_hash(config),
        config: config.clone(),
        params: entries,
    };
    let hjson = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + hjson.len() + 4 * offset);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(hjson.len() as u64).to_le_bytes());
    out.extend_from_slice(&hjson);
    for (_, t) in store.iter() {
        for v in t.data() {
            out.extend_from_slice(&(v.f64() as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(CheckpointHeader, ParamStore<f32>)> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes
        .get(16..16 + hlen)
        .ok_or_else(|| Error::Checkpoint("truncated header".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(body)?;
    if header.config_hash != config_hash(&header.config) {
        return Err(Error::Checkpoint("config hash mismatch".into()));
    }
    let payload = &bytes[16 + hlen..];
    let mut store = ParamStore::new();
    for e in &header.params {
        let n: usize = e.shape.iter().product();
        let start = 4 * e.offset;
        let raw = payload
            .get(start..start + 4 * n)
            .ok_or_else(|| Error::Checkpoint(format!("payload too short for `{}`", e.name)))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        store.insert(e.name.clone(), Tensor::new(e.shape.clone(), data)?)?;
    }
    Ok((header, store))
}

pub fn save_checkpoint<F: Real>(
    path: &Path,
    store: &ParamStore<F>,
    config: &serde_json::Value,
    seed: u64,
) -> Result<()> {
    let bytes = encode_checkpoint(store, config, seed)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(CheckpointHeader, ParamStore<f32>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
