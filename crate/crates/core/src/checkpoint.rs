//! Binary checkpoint container.
//!
//! Layout (little-endian throughout):
//!
//! ```text
//! "GASP"  u32 version  u64 tensor_count
//! per tensor: u32 name_len, name bytes, u32 ndim, u64 dims[ndim], f64 data[Π dims]
//! u64 config_len, config bytes (UTF-8 `key=value` lines)
//! rng: [u8; 32] seed, u64 stream, u128 word_pos
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use gasp_autodiff::Tensor;
use thiserror::Error;

use crate::error::{Error, Result};
use crate::rng::RngState;

pub const MAGIC: &[u8; 4] = b"GASP";
pub const VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic bytes)")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },
    #[error("checkpoint truncated at byte {0}")]
    Truncated(usize),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("checkpoint is missing entry `{0}`")]
    Missing(String),
}

/// Everything a checkpoint holds: named tensors, a flat string config, and
/// the position of the random stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<(String, Tensor)>,
    pub config: BTreeMap<String, String>,
    pub rng: RngState,
}

impl Checkpoint {
    pub fn new(rng: RngState) -> Self {
        Self {
            tensors: Vec::new(),
            config: BTreeMap::new(),
            rng,
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.push((name.into(), tensor));
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        self.config.insert(key.into(), value.to_string());
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| CheckpointError::Missing(name.to_string()).into())
    }

    /// Tensors whose names start with `prefix`, in stored order.
    pub fn tensors_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (&'a str, &'a Tensor)> + 'a {
        self.tensors
            .iter()
            .filter(move |(n, _)| n.starts_with(prefix))
            .map(|(n, t)| (n.as_str(), t))
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.config
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| CheckpointError::Missing(key.to_string()).into())
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.get(key)?;
        raw.parse()
            .map_err(|_| CheckpointError::Malformed(format!("config `{key}` has unparsable value `{raw}`")).into())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u64).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let config: String = self.config.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        out.extend_from_slice(&(config.len() as u64).to_le_bytes());
        out.extend_from_slice(config.as_bytes());
        out.extend_from_slice(&self.rng.seed);
        out.extend_from_slice(&self.rng.stream.to_le_bytes());
        out.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4).map_err(|_| CheckpointError::BadMagic)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion {
                found: version,
                expected: VERSION,
            });
        }
        let count = r.u64()?;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| CheckpointError::Malformed("tensor name is not UTF-8".into()))?
                .to_string();
            let ndim = r.u32()? as usize;
            let mut shape = Vec::with_capacity(ndim.min(16));
            for _ in 0..ndim {
                shape.push(usize::try_from(r.u64()?).map_err(|_| malformed_dims(&name))?);
            }
            let numel = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .filter(|&n| n.checked_mul(8).is_some_and(|b| b <= r.remaining()))
                .ok_or_else(|| CheckpointError::Truncated(bytes.len()))?;
            let mut data = Vec::with_capacity(numel);
            for _ in 0..numel {
                data.push(f64::from_le_bytes(r.array()?));
            }
            let tensor = Tensor::new(&shape, data).map_err(|_| malformed_dims(&name))?;
            tensors.push((name, tensor));
        }
        let config_len = usize::try_from(r.u64()?).map_err(|_| CheckpointError::Truncated(bytes.len()))?;
        let text = std::str::from_utf8(r.take(config_len)?)
            .map_err(|_| CheckpointError::Malformed("config is not UTF-8".into()))?;
        let mut config = BTreeMap::new();
        for line in text.lines() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CheckpointError::Malformed(format!("config line `{line}` has no `=`")))?;
            config.insert(k.to_string(), v.to_string());
        }
        let seed: [u8; 32] = r.array()?;
        let stream = r.u64()?;
        let word_pos = u128::from_le_bytes(r.array()?);
        if r.remaining() != 0 {
            return Err(CheckpointError::Malformed(format!("{} trailing bytes", r.remaining())));
        }
        Ok(Self {
            tensors,
            config,
            rng: RngState { seed, stream, word_pos },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_bytes(&bytes)?)
    }
}

fn malformed_dims(name: &str) -> CheckpointError {
    CheckpointError::Malformed(format!("tensor `{name}` has invalid dims"))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if n > self.remaining() {
            return Err(CheckpointError::Truncated(self.bytes.len()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], CheckpointError> {
        Ok(self.take(N)?.try_into().expect("slice has length N"))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.array()?))
    }
}
