//! Versioned checkpoint container shared by every trainable stage.
//!
//! Layout: 8-byte magic, u32 version, u64 header length, JSON header, then
//! the concatenated raw tensor payload (little-endian f64). The header
//! indexes tensors by name/shape/offset and carries the stage config, the
//! epoch (or update) counter, and the RNG state. Decoding is defensive:
//! every offset and length is bounds-checked against the actual payload, so
//! arbitrary bytes can be fed to [`decode`] safely.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::fsutil;

pub const MAGIC: &[u8; 8] = b"SKTNCKPT";
pub const VERSION: u32 = 1;

/// Maximum accepted header size; prevents absurd allocations on bad input.
const MAX_HEADER_LEN: u64 = 16 * 1024 * 1024;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint: {0}")]
    BadMagic(String),
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

/// RNG bookkeeping: the run's base seed and a monotonically increasing
/// counter (epoch or update index); sub-streams are derived, never resumed
/// mid-stream, which keeps resume bit-exact.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq, Eq)]
pub struct RngState {
    pub seed: u64,
    pub counter: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    offset: u64,
    byte_len: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: serde_json::Value,
    epoch: u64,
    rng: RngState,
    tensors: Vec<TensorEntry>,
}

/// A decoded checkpoint.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: serde_json::Value,
    pub epoch: u64,
    pub rng: RngState,
    pub tensors: BTreeMap<String, ArrayD<f64>>,
}

impl Checkpoint {
    pub fn new(config: serde_json::Value, epoch: u64, rng: RngState) -> Self {
        Self {
            config,
            epoch,
            rng,
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert_tensors(&mut self, map: BTreeMap<String, ArrayD<f64>>) {
        self.tensors.extend(map);
    }

    /// Tensors whose names start with `prefix`, with the prefix stripped.
    pub fn tensors_with_prefix(&self, prefix: &str) -> BTreeMap<String, ArrayD<f64>> {
        self.tensors
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(prefix).map(|s| (s.to_string(), v.clone())))
            .collect()
    }
}

pub fn encode(ckpt: &Checkpoint) -> Vec<u8> {
    let mut payload: Vec<u8> = Vec::new();
    let mut entries = Vec::new();
    for (name, tensor) in &ckpt.tensors {
        let offset = payload.len() as u64;
        for v in tensor.iter() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        entries.push(TensorEntry {
            name: name.clone(),
            shape: tensor.shape().to_vec(),
            dtype: "f64".to_string(),
            offset,
            byte_len: (tensor.len() * 8) as u64,
        });
    }
    let header = Header {
        config: ckpt.config.clone(),
        epoch: ckpt.epoch,
        rng: ckpt.rng,
        tensors: entries,
    };
    let header_bytes = serde_json::to_vec(&header).expect("header serializes");

    let mut out = Vec::with_capacity(20 + header_bytes.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    out.extend_from_slice(&payload);
    out
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    if bytes.len() < 20 {
        return Err(CheckpointError::Corrupt("truncated preamble".into()));
    }
    if &bytes[..8] != MAGIC {
        return Err(CheckpointError::BadMagic(format!("{:02x?}", &bytes[..8])));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    if header_len > MAX_HEADER_LEN {
        return Err(CheckpointError::Corrupt(format!(
            "header length {header_len} exceeds limit"
        )));
    }
    let header_end = 20usize
        .checked_add(header_len as usize)
        .ok_or_else(|| CheckpointError::Corrupt("header length overflow".into()))?;
    if bytes.len() < header_end {
        return Err(CheckpointError::Corrupt("truncated header".into()));
    }
    let header: Header = serde_json::from_slice(&bytes[20..header_end])
        .map_err(|e| CheckpointError::Corrupt(format!("header json: {e}")))?;
    let payload = &bytes[header_end..];

    let mut tensors = BTreeMap::new();
    for entry in header.tensors {
        if entry.dtype != "f64" {
            return Err(CheckpointError::Corrupt(format!(
                "tensor {}: unsupported dtype {}",
                entry.name, entry.dtype
            )));
        }
        let numel: usize = entry
            .shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| CheckpointError::Corrupt("shape overflow".into()))?;
        if entry.byte_len as usize != numel * 8 {
            return Err(CheckpointError::Corrupt(format!(
                "tensor {}: shape/length mismatch",
                entry.name
            )));
        }
        let start = entry.offset as usize;
        let end = start
            .checked_add(entry.byte_len as usize)
            .ok_or_else(|| CheckpointError::Corrupt("offset overflow".into()))?;
        if end > payload.len() {
            return Err(CheckpointError::Corrupt(format!(
                "tensor {}: out of bounds",
                entry.name
            )));
        }
        let mut data = Vec::with_capacity(numel);
        for chunk in payload[start..end].chunks_exact(8) {
            data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
        }
        let arr = ArrayD::from_shape_vec(IxDyn(&entry.shape), data)
            .map_err(|e| CheckpointError::Corrupt(format!("tensor {}: {e}", entry.name)))?;
        if tensors.insert(entry.name.clone(), arr).is_some() {
            return Err(CheckpointError::Corrupt(format!(
                "duplicate tensor {}",
                entry.name
            )));
        }
    }
    Ok(Checkpoint {
        config: header.config,
        epoch: header.epoch,
        rng: header.rng,
        tensors,
    })
}

/// Atomic save (write-temp-then-rename).
pub fn save(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    let path = path.as_ref();
    fsutil::atomic_write(path, &encode(ckpt)).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint, CheckpointError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::IxDyn;

    fn sample() -> Checkpoint {
        let mut ckpt = Checkpoint::new(
            serde_json::json!({"stage": "vae", "lr": 2e-3}),
            7,
            RngState { seed: 42, counter: 7 },
        );
        let mut t = BTreeMap::new();
        t.insert(
            "enc.w".to_string(),
            ArrayD::from_shape_vec(IxDyn(&[2, 3]), vec![1.0, -2.5, 0.0, 3.25, 1e-9, f64::MAX])
                .unwrap(),
        );
        t.insert("enc.b".to_string(), ArrayD::from_elem(IxDyn(&[3]), 0.125));
        ckpt.insert_tensors(t);
        ckpt
    }

    #[test]
    fn roundtrip_preserves_everything() {
        let ckpt = sample();
        let decoded = decode(&encode(&ckpt)).unwrap();
        assert_eq!(decoded.epoch, 7);
        assert_eq!(decoded.rng, ckpt.rng);
        assert_eq!(decoded.config, ckpt.config);
        assert_eq!(decoded.tensors.len(), 2);
        for (k, v) in &ckpt.tensors {
            let d = &decoded.tensors[k];
            assert_eq!(d.shape(), v.shape());
            assert!(d.iter().zip(v.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let bytes = encode(&sample());
        assert!(matches!(decode(&bytes[..10]), Err(CheckpointError::Corrupt(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(CheckpointError::BadMagic(_))));
        // Truncate the payload: tensor bounds check trips.
        let short = &bytes[..bytes.len() - 4];
        assert!(matches!(decode(short), Err(CheckpointError::Corrupt(_))));
    }

    #[test]
    fn rejects_shape_length_mismatch() {
        // Patch a shape digit in the header; "[2,3]" -> "[2,4]" keeps the
        // header length intact, so only the tensor check can reject it.
        let mut bytes = encode(&sample());
        let s = String::from_utf8_lossy(&bytes[20..]).to_string();
        let patched = s.replacen("\"shape\":[2,3]", "\"shape\":[2,4]", 1);
        assert_ne!(patched, s);
        bytes.splice(20.., patched.into_bytes());
        assert!(matches!(decode(&bytes), Err(CheckpointError::Corrupt(_))));
    }

    #[test]
    fn save_and_load_via_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&sample(), &path).unwrap();
        let loaded = load(&path).unwrap();
        assert_eq!(loaded.epoch, 7);
    }
}
