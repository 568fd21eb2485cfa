//! Binary checkpoint container.
//!
//! Layout: the 8-byte magic `SSMCKPT1`, a little-endian `u64` header
//! length, a UTF-8 JSON header, then every parameter's values as
//! little-endian `f64` in header order. Offsets in the header count `f64`
//! elements from the start of the payload.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use stiffssm_tensor::Tensor;

use crate::error::{Error, Result};
use crate::ssm::ParamSet;

pub const MAGIC: &[u8; 8] = b"SSMCKPT1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    variant: String,
    seed: u64,
    config: serde_json::Value,
    meta: serde_json::Value,
    params: Vec<ParamEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Registry name of the model variant.
    pub variant: String,
    pub seed: u64,
    /// Echo of the configuration that produced the parameters.
    pub config: serde_json::Value,
    /// Variant-specific state: normalization statistics, bases, thresholds.
    pub meta: serde_json::Value,
    pub params: ParamSet,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut offset = 0;
        let params = self
            .params
            .iter()
            .map(|(name, t)| {
                let e = ParamEntry { name: name.to_string(), shape: t.shape().to_vec(), offset };
                offset += t.len();
                e
            })
            .collect();
        let header = Header {
            variant: self.variant.clone(),
            seed: self.seed,
            config: self.config.clone(),
            meta: self.meta.clone(),
            params,
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + json.len() + offset * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in self.params.tensors() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |reason: String| Error::format(path, reason);
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint (bad magic)".into()));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = &bytes[16..];
        if hlen > body.len() {
            return Err(bad(format!("header length {hlen} exceeds file size")));
        }
        let header: Header = serde_json::from_slice(&body[..hlen]).map_err(|e| bad(format!("header: {e}")))?;
        let payload = &body[hlen..];
        let total: usize = header.params.iter().map(|e| e.shape.iter().product::<usize>()).sum();
        if payload.len() != total * 8 {
            return Err(bad(format!(
                "length mismatch: header implies {} payload bytes, found {}",
                total * 8,
                payload.len()
            )));
        }
        let mut params = ParamSet::new();
        for e in &header.params {
            let len: usize = e.shape.iter().product();
            if e.offset + len > total {
                return Err(bad(format!("parameter `{}` lies outside the payload", e.name)));
            }
            let data = payload[e.offset * 8..(e.offset + len) * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let t = Tensor::new(e.shape.clone(), data).map_err(|err| bad(err.to_string()))?;
            params.insert(e.name.clone(), t).map_err(|err| bad(err.to_string()))?;
        }
        Ok(Checkpoint { variant: header.variant, seed: header.seed, config: header.config, meta: header.meta, params })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    /// Deserializes one entry of `meta`.
    pub fn meta_field<T: serde::de::DeserializeOwned>(&self, key: &str) -> Result<T> {
        let v = self.meta.get(key).ok_or_else(|| Error::invalid("checkpoint", format!("missing `{key}`")))?;
        serde_json::from_value(v.clone()).map_err(|e| Error::invalid("checkpoint", format!("`{key}`: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut params = ParamSet::new();
        params.insert("a", Tensor::new(vec![2], vec![1.5, -0.0]).unwrap()).unwrap();
        params.insert("b", Tensor::new(vec![1, 3], vec![f64::MIN_POSITIVE, 2.0, 3.0]).unwrap()).unwrap();
        Checkpoint {
            variant: "standalone".into(),
            seed: 7,
            config: serde_json::json!({"k": 1}),
            meta: serde_json::json!({"x": [0.1, 0.2]}),
            params,
        }
    }

    #[test]
    fn bytes_roundtrip() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes(), Path::new("mem")).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), c.to_bytes());
        let x: Vec<f64> = back.meta_field("x").unwrap();
        assert_eq!(x, vec![0.1, 0.2]);
    }

    #[test]
    fn detects_corruption() {
        let bytes = sample().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 8], Path::new("m")).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad, Path::new("m")).is_err());
        assert!(Checkpoint::from_bytes(&bytes[..10], Path::new("m")).is_err());
    }
}
