//! Binary checkpoint: `FGAN` magic, u32 LE version, u32 LE length-prefixed JSON
//! header, then every tensor as little-endian f32 in directory order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Discriminator, DiscriminatorSpec, Generator, GeneratorSpec, ModelError, ParamSet};
use crate::autodiff::Tensor;

pub const MAGIC: &[u8; 4] = b"FGAN";
pub const FORMAT_VERSION: u32 = 1;

const GEN_PREFIX: &str = "generator.";
const DISC_PREFIX: &str = "discriminator.";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic: expected \"FGAN\", found {found:?}")]
    BadMagic { found: Vec<u8> },
    #[error("unsupported checkpoint version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error("truncated checkpoint: field `{field}` needs {needed} bytes, {available} remain")]
    Truncated {
        field: String,
        needed: usize,
        available: usize,
    },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("{0} unexpected trailing bytes after the last tensor")]
    TrailingBytes(usize),
    #[error("checkpoint does not describe a valid model: {0}")]
    Model(#[from] ModelError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Facts about the run that produced a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub seed: u64,
    pub lr: f32,
    pub beta1: f32,
    pub lambda_l1: f32,
    pub train_pairs: usize,
    pub final_d_loss: Option<f64>,
    pub final_g_adversarial: Option<f64>,
    pub final_g_l1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub meta: TrainingMeta,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    dims: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    generator: GeneratorSpec,
    discriminator: DiscriminatorSpec,
    meta: TrainingMeta,
    tensors: Vec<TensorEntry>,
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let named = self.named_tensors();
        let header = Header {
            generator: self.generator.spec().clone(),
            discriminator: self.discriminator.spec().clone(),
            meta: self.meta.clone(),
            tensors: named
                .iter()
                .map(|(name, t)| TensorEntry {
                    name: name.clone(),
                    dims: t.shape().to_vec(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let payload: usize = named.iter().map(|(_, t)| 4 * t.numel()).sum();
        let mut out = Vec::with_capacity(12 + json.len() + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in &named {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let g = self
            .generator
            .params()
            .iter()
            .map(|(n, t)| (format!("{GEN_PREFIX}{n}"), t));
        let d = self
            .discriminator
            .params()
            .iter()
            .map(|(n, t)| (format!("{DISC_PREFIX}{n}"), t));
        g.chain(d).collect()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut reader = Reader { bytes, pos: 0 };
        let magic = reader.take("magic", 4)?;
        if magic != MAGIC {
            return Err(CheckpointError::BadMagic {
                found: magic.to_vec(),
            });
        }
        let version = reader.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::UnsupportedVersion {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        let header_len = reader.u32("header length")? as usize;
        let header_bytes = reader.take("header", header_len)?;
        let header: Header = serde_json::from_slice(header_bytes)
            .map_err(|e| CheckpointError::Header(e.to_string()))?;

        let mut generator = ParamSet::new();
        let mut discriminator = ParamSet::new();
        for entry in &header.tensors {
            let numel: usize = entry.dims.iter().product();
            let field = format!("tensor {}", entry.name);
            let raw = reader.take(&field, 4 * numel)?;
            let data = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            let tensor = Tensor::new(&entry.dims, data)
                .map_err(|e| CheckpointError::Header(format!("tensor {}: {e}", entry.name)))?;
            if let Some(name) = entry.name.strip_prefix(GEN_PREFIX) {
                generator.push(name, tensor);
            } else if let Some(name) = entry.name.strip_prefix(DISC_PREFIX) {
                discriminator.push(name, tensor);
            } else {
                return Err(CheckpointError::Header(format!(
                    "tensor {} belongs to neither network",
                    entry.name
                )));
            }
        }
        let rest = bytes.len() - reader.pos;
        if rest != 0 {
            return Err(CheckpointError::TrailingBytes(rest));
        }
        Ok(Checkpoint {
            generator: Generator::from_params(header.generator, generator)?,
            discriminator: Discriminator::from_params(header.discriminator, discriminator)?,
            meta: header.meta,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, field: &str, n: usize) -> Result<&'a [u8], CheckpointError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(CheckpointError::Truncated {
                field: field.to_string(),
                needed: n,
                available,
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, field: &str) -> Result<u32, CheckpointError> {
        let b = self.take(field, 4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    let path = path.as_ref();
    fs::write(path, ckpt.encode()).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, CheckpointError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Checkpoint::decode(&bytes)
}
