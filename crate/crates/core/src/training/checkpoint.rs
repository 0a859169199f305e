//! Single-file checkpoint archive:
//!
//! ```text
//! magic "PSQACKPT" | u32 version | u64 header length | JSON header | f64 data
//! ```
//!
//! All integers and floats are little-endian. The header lists every tensor
//! name and shape in the order the data follows.

use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::backbone::BackboneConfig;
use crate::error::{Error, Result};
use crate::pairgen::Scenario;
use crate::samos::{ModelConfig, Params, SaMos};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PSQACKPT";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const CHECKPOINT_SCHEMA: &str = "prefsqa.checkpoint.v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub schema: String,
    pub model: ModelConfig,
    pub backbone: BackboneConfig,
    pub train: TrainConfig,
    pub scenario: Option<Scenario>,
    pub seed: u64,
    pub epoch: usize,
    pub dev_srcc: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    #[serde(flatten)]
    meta: CheckpointMeta,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub model: SaMos,
}

fn ckpt_err(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let tensors = self.model.tensors();
        let header = Header {
            meta: self.meta.clone(),
            tensors: tensors
                .iter()
                .map(|(name, t)| TensorEntry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Serde(e.to_string()))?;
        let mut out = Vec::with_capacity(24 + json.len() + 8 * self.model.num_params());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.write_u32::<LittleEndian>(CHECKPOINT_VERSION).expect("vec write");
        out.write_u64::<LittleEndian>(json.len() as u64).expect("vec write");
        out.write_all(&json).expect("vec write");
        for (_, t) in &tensors {
            for &v in t.iter() {
                out.write_f64::<LittleEndian>(v).expect("vec write");
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor::new(bytes);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| ckpt_err("file too short"))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(ckpt_err("not a checkpoint archive (bad magic)"));
        }
        let version = r.read_u32::<LittleEndian>().map_err(|_| ckpt_err("truncated header"))?;
        if version != CHECKPOINT_VERSION {
            return Err(ckpt_err(format!(
                "archive version {version} is not supported (expected {CHECKPOINT_VERSION})"
            )));
        }
        let len = r.read_u64::<LittleEndian>().map_err(|_| ckpt_err("truncated header"))? as usize;
        let start = r.position() as usize;
        let json = bytes
            .get(start..start.saturating_add(len))
            .ok_or_else(|| ckpt_err("truncated header"))?;
        let header: Header = serde_json::from_slice(json).map_err(|e| ckpt_err(format!("header: {e}")))?;
        if header.meta.schema != CHECKPOINT_SCHEMA {
            return Err(ckpt_err(format!(
                "schema `{}` does not match `{CHECKPOINT_SCHEMA}`",
                header.meta.schema
            )));
        }
        r.set_position((start + len) as u64);
        let mut model = SaMos::zeros(header.meta.model.clone())?;
        {
            let mut tensors = model.tensors_mut();
            if tensors.len() != header.tensors.len() {
                return Err(ckpt_err(format!(
                    "{} tensors stored, model has {}",
                    header.tensors.len(),
                    tensors.len()
                )));
            }
            for ((name, t), entry) in tensors.iter_mut().zip(&header.tensors) {
                if *name != entry.name || t.shape() != entry.shape.as_slice() {
                    return Err(ckpt_err(format!(
                        "tensor `{}` {:?} does not match model tensor `{name}` {:?}",
                        entry.name,
                        entry.shape,
                        t.shape()
                    )));
                }
                for v in t.iter_mut() {
                    *v = r
                        .read_f64::<LittleEndian>()
                        .map_err(|_| ckpt_err(format!("data truncated in `{name}`")))?;
                }
            }
        }
        if (r.position() as usize) != bytes.len() {
            return Err(ckpt_err("trailing bytes after tensor data"));
        }
        Ok(Checkpoint {
            meta: header.meta,
            model,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}
