//! Model checkpoints.
//!
//! Layout: magic bytes `MPCK`, format version (u32 LE), header length
//! (u32 LE), the UTF-8 JSON header, then every parameter tensor as
//! little-endian f64 in header order. The header records hyperparameters,
//! parameter names/shapes, and the run seed, so a checkpoint is
//! self-describing.

use std::io::{Read, Write};
use std::path::Path;

use metal_core::tensor::{ParamStore, Tensor};
use metal_core::trainer::{Arch, EmbedArch, ModelParams};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::{CliError, Result};

const MAGIC: &[u8; 4] = b"MPCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    /// Free-form hyperparameter record (budget, lr, similarity, ...).
    pub hyper: Value,
    pub arch: ArchRecord,
    pub params: Vec<ParamRecord>,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArchRecord {
    pub input_dim: usize,
    /// Hidden layer widths of the embedder; empty plus `embed_out = None`
    /// means the identity representation.
    pub embed_hidden: Vec<usize>,
    pub embed_out: Option<usize>,
    pub rnn_hidden: usize,
}

impl ArchRecord {
    pub fn from_arch(arch: &Arch) -> Self {
        match &arch.embed {
            EmbedArch::Identity => ArchRecord {
                input_dim: arch.input_dim,
                embed_hidden: Vec::new(),
                embed_out: None,
                rnn_hidden: arch.rnn_hidden,
            },
            EmbedArch::Mlp { hidden, out } => ArchRecord {
                input_dim: arch.input_dim,
                embed_hidden: hidden.clone(),
                embed_out: Some(*out),
                rnn_hidden: arch.rnn_hidden,
            },
        }
    }

    pub fn to_arch(&self) -> Arch {
        Arch {
            input_dim: self.input_dim,
            embed: match self.embed_out {
                None => EmbedArch::Identity,
                Some(out) => EmbedArch::Mlp {
                    hidden: self.embed_hidden.clone(),
                    out,
                },
            },
            rnn_hidden: self.rnn_hidden,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
}

pub fn save(path: &Path, model: &ModelParams, hyper: Value, seed: u64) -> Result<()> {
    let header = CheckpointHeader {
        hyper,
        arch: ArchRecord::from_arch(&model.arch),
        params: model
            .store
            .iter()
            .map(|(name, t)| ParamRecord {
                name: name.to_string(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        seed,
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(MAGIC)?;
    f.write_all(&VERSION.to_le_bytes())?;
    f.write_all(&(header_bytes.len() as u32).to_le_bytes())?;
    f.write_all(&header_bytes)?;
    for (_, t) in model.store.iter() {
        for v in t.values() {
            f.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load(path: &Path) -> Result<(ModelParams, CheckpointHeader)> {
    let mut f = std::fs::File::open(path)
        .map_err(|e| CliError::runtime(format!("cannot open checkpoint {}: {e}", path.display())))?;
    let mut magic = [0u8; 4];
    f.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CliError::runtime(format!(
            "{}: not a checkpoint (bad magic)",
            path.display()
        )));
    }
    let mut word = [0u8; 4];
    f.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(CliError::runtime(format!(
            "{}: unsupported checkpoint version {version}",
            path.display()
        )));
    }
    f.read_exact(&mut word)?;
    let header_len = u32::from_le_bytes(word) as usize;
    let mut header_bytes = vec![0u8; header_len];
    f.read_exact(&mut header_bytes)?;
    let header: CheckpointHeader = serde_json::from_slice(&header_bytes)?;

    let mut store = ParamStore::new();
    let mut buf = [0u8; 8];
    for rec in &header.params {
        let len: usize = rec.shape.iter().product();
        let mut values = Vec::with_capacity(len);
        for _ in 0..len {
            f.read_exact(&mut buf)?;
            values.push(f64::from_le_bytes(buf));
        }
        let tensor = match rec.shape.len() {
            1 => Tensor::vector(values),
            2 => Tensor::matrix(rec.shape[0], rec.shape[1], values)
                .map_err(|e| CliError::runtime(e.to_string()))?,
            _ => {
                return Err(CliError::runtime(format!(
                    "{}: unsupported tensor rank {}",
                    path.display(),
                    rec.shape.len()
                )))
            }
        };
        store
            .add(rec.name.clone(), tensor)
            .map_err(|e| CliError::runtime(e.to_string()))?;
    }
    let model = ModelParams::from_store(header.arch.to_arch(), store)
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    Ok((model, header))
}
