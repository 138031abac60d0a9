//! Named parameter tensors and their on-disk container.
//!
//! Layout: the 8-byte magic `DOCBINPS`, a little-endian `u32` header length, a
//! JSON header, then every tensor's values as little-endian `f32` in header order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::tensor::{Shape, Tensor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"DOCBINPS";
const VERSION: u32 = 1;

/// Hex SHA-256 of a spec's JSON serialization with object keys sorted.
pub fn spec_hash<T: Serialize>(spec: &T) -> String {
    let value = serde_json::to_value(spec).expect("specs serialize");
    let json = serde_json::to_string(&value).expect("values serialize");
    Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    seed: u64,
    spec_hash: String,
    spec: serde_json::Value,
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Shape,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    seed: u64,
    spec_hash: String,
    spec: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

impl ParamSet {
    pub fn new<T: Serialize>(spec: &T, seed: u64) -> Self {
        Self {
            seed,
            spec_hash: spec_hash(spec),
            spec: serde_json::to_value(spec).expect("specs serialize"),
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub(crate) fn push(&mut self, name: String, tensor: Tensor) {
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(tensor);
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn spec_hash(&self) -> &str {
        &self.spec_hash
    }

    /// The spec this set was built for, as stored in its header.
    pub fn spec_json(&self) -> &serde_json::Value {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    /// Fails unless the set was built for a spec hashing to `expected`.
    pub fn check_hash(&self, expected: &str) -> Result<()> {
        if self.spec_hash != expected {
            return Err(Error::SpecHashMismatch {
                expected: expected.to_string(),
                found: self.spec_hash.clone(),
            });
        }
        Ok(())
    }

    pub fn write_to(&self, mut out: impl Write) -> Result<()> {
        let header = Header {
            version: VERSION,
            seed: self.seed,
            spec_hash: self.spec_hash.clone(),
            spec: self.spec.clone(),
            tensors: self
                .names
                .iter()
                .zip(&self.tensors)
                .map(|(name, t)| TensorEntry { name: name.clone(), shape: t.shape() })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        out.write_all(MAGIC)?;
        out.write_all(&(json.len() as u32).to_le_bytes())?;
        out.write_all(&json)?;
        let mut buf = Vec::with_capacity(self.count() * 4);
        for t in &self.tensors {
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(mut input: impl Read) -> Result<Self> {
        let fail = |reason: &str| Error::Format { path: "<param set>".into(), reason: reason.into() };
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(fail("bad magic"));
        }
        let mut len = [0u8; 4];
        input.read_exact(&mut len)?;
        let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
        input.read_exact(&mut json)?;
        let header: Header = serde_json::from_slice(&json)?;
        if header.version != VERSION {
            return Err(fail("unsupported version"));
        }
        if spec_hash(&header.spec) != header.spec_hash {
            return Err(fail("stored spec does not match its hash"));
        }
        let mut set = Self {
            seed: header.seed,
            spec_hash: header.spec_hash,
            spec: header.spec,
            names: Vec::new(),
            tensors: Vec::new(),
        };
        for entry in header.tensors {
            let n: usize = entry.shape.iter().product();
            let mut bytes = vec![0u8; n * 4];
            input.read_exact(&mut bytes)?;
            let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            set.push(entry.name, Tensor::from_vec(entry.shape, data)?);
        }
        let mut rest = Vec::new();
        input.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(fail("trailing bytes"));
        }
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file)).map_err(|e| match e {
            Error::Format { reason, .. } => Error::Format { path: path.to_path_buf(), reason },
            other => other,
        })
    }
}
