//! Versioned binary checkpoints for trained parameters.
//!
//! Layout (all integers little-endian):
//!   magic           8 bytes  b"MOSGNNCK"
//!   version         u32      currently 1
//!   meta_len        u32      length of the JSON metadata blob
//!   meta            meta_len bytes of JSON ([`CheckpointMeta`])
//!   n_tensors       u32
//!   per tensor:     name_len u16, name bytes, rows u32, cols u32
//!   values          rows * cols f64 per tensor, in table order

use crate::model::{LossConfig, ModelConfig, ModelParams};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"MOSGNNCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Error, Debug)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic bytes (not a checkpoint file)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint/dataset mismatch: {0}")]
    ShapeMismatch(String),
}

/// Everything needed to rebuild the prediction path around the parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub threshold: f64,
    pub q: usize,
    pub node_drop: f64,
    pub edge_drop: f64,
    pub feature_dim: usize,
    pub dataset_fingerprint: String,
    pub fold: usize,
    pub seed: u64,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io { path: path.display().to_string(), source }
}

/// Names for the flat tensor table: group name plus index within the group.
fn tensor_names(params: &ModelParams) -> Vec<String> {
    let group_sizes = [
        ("encoder_graph", params.encoder_graph.tensors().len()),
        ("encoder_subgraph", params.encoder_subgraph.tensors().len()),
        ("head_graph", params.head_graph.tensors().len()),
        ("head_pair", params.head_pair.tensors().len()),
        ("head_subgraph", params.head_subgraph.tensors().len()),
    ];
    let mut names = Vec::new();
    for (group, size) in group_sizes {
        for i in 0..size {
            names.push(format!("{group}.{i}"));
        }
    }
    names
}

pub fn save_checkpoint(
    path: &Path,
    params: &ModelParams,
    meta: &CheckpointMeta,
) -> Result<(), CheckpointError> {
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let meta_json = serde_json::to_vec(meta).expect("meta serialize");
    out.extend_from_slice(&(meta_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta_json);

    let tensors = params.tensors();
    let names = tensor_names(params);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (t, name) in tensors.iter().zip(&names) {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
    }
    for t in &tensors {
        for v in t.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&out).map_err(io_err(path))
}

/// Load a checkpoint into a freshly shaped [`ModelParams`]. The caller
/// passes a template with the expected architecture (built from the
/// checkpoint's own meta via [`ModelParams::init`]); shapes are verified
/// entry by entry.
pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, CheckpointMeta), CheckpointError> {
    let mut raw = Vec::new();
    fs::File::open(path).map_err(io_err(path))?.read_to_end(&mut raw).map_err(io_err(path))?;
    let mut at = 0usize;
    let take = |at: &mut usize, n: usize| -> Result<&[u8], CheckpointError> {
        if *at + n > raw.len() {
            return Err(CheckpointError::Corrupt(format!(
                "truncated at byte {} (wanted {n} more)",
                *at
            )));
        }
        let s = &raw[*at..*at + n];
        *at += n;
        Ok(s)
    };

    if take(&mut at, 8)? != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let meta_len = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize;
    let meta: CheckpointMeta = serde_json::from_slice(take(&mut at, meta_len)?)
        .map_err(|e| CheckpointError::Corrupt(format!("meta json: {e}")))?;

    let n_tensors = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize;
    let mut table = Vec::with_capacity(n_tensors);
    for _ in 0..n_tensors {
        let name_len = u16::from_le_bytes(take(&mut at, 2)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(&mut at, name_len)?.to_vec())
            .map_err(|e| CheckpointError::Corrupt(format!("tensor name: {e}")))?;
        let rows = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize;
        table.push((name, rows, cols));
    }
    let mut tensors = Vec::with_capacity(n_tensors);
    for (name, rows, cols) in &table {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(f64::from_le_bytes(take(&mut at, 8)?.try_into().unwrap()));
        }
        let t = Tensor::new(*rows, *cols, data)
            .map_err(|e| CheckpointError::Corrupt(format!("tensor {name}: {e}")))?;
        tensors.push(t);
    }

    // rebuild the architecture from the meta, then fill it from the table
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let mut params = ModelParams::init(&meta.model, meta.feature_dim, &mut rng);
    let expected_names = tensor_names(&params);
    if expected_names.len() != tensors.len() {
        return Err(CheckpointError::ShapeMismatch(format!(
            "architecture expects {} tensors, checkpoint has {}",
            expected_names.len(),
            tensors.len()
        )));
    }
    for ((slot, loaded), (name, ..)) in
        params.tensors_mut().into_iter().zip(tensors).zip(&table)
    {
        if slot.shape() != loaded.shape() {
            return Err(CheckpointError::ShapeMismatch(format!(
                "tensor {name}: expected {:?}, found {:?}",
                slot.shape(),
                loaded.shape()
            )));
        }
        *slot = loaded;
    }
    let _ = expected_names;
    Ok((params, meta))
}
