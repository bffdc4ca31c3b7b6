use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Real, Tensor, TensorError};

pub const CHECKPOINT_FORMAT: &str = "ringkit-checkpoint";
const MANIFEST: &str = "manifest.json";
const PARAMS: &str = "params.bin";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: [usize; 2],
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    precision: String,
    params: Vec<ParamEntry>,
    metadata: serde_json::Value,
}

/// Named parameters plus free-form metadata (model config, vocabulary, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub names: Vec<String>,
    pub tensors: Vec<Tensor<T>>,
    pub metadata: serde_json::Value,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> TensorError {
    TensorError::Checkpoint(format!("{}: {e}", path.display()))
}

/// Writes `manifest.json` and `params.bin` (little-endian, manifest order).
pub fn save_checkpoint<T: Real>(dir: &Path, ckpt: &Checkpoint<T>) -> Result<(), TensorError> {
    if ckpt.names.len() != ckpt.tensors.len() {
        return Err(TensorError::Checkpoint("names and tensors differ in length".into()));
    }
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let manifest = Manifest {
        format: CHECKPOINT_FORMAT.to_string(),
        version: 1,
        precision: T::NAME.to_string(),
        params: ckpt
            .names
            .iter()
            .zip(&ckpt.tensors)
            .map(|(n, t)| ParamEntry {
                name: n.clone(),
                shape: t.shape(),
            })
            .collect(),
        metadata: ckpt.metadata.clone(),
    };
    let mut bytes = Vec::with_capacity(ckpt.tensors.iter().map(|t| t.len() * T::BYTES).sum());
    for t in &ckpt.tensors {
        for &x in t.data() {
            x.write_le(&mut bytes);
        }
    }
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| io_err(dir, e))?;
    let mpath = dir.join(MANIFEST);
    fs::write(&mpath, text + "\n").map_err(|e| io_err(&mpath, e))?;
    let ppath = dir.join(PARAMS);
    fs::write(&ppath, bytes).map_err(|e| io_err(&ppath, e))
}

/// Stored precision name and metadata, without reading the parameters.
pub fn peek_checkpoint(dir: &Path) -> Result<(String, serde_json::Value), TensorError> {
    let mpath = dir.join(MANIFEST);
    let text = fs::read_to_string(&mpath).map_err(|e| io_err(&mpath, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| io_err(&mpath, e))?;
    if manifest.format != CHECKPOINT_FORMAT {
        return Err(io_err(&mpath, format!("unknown format {:?}", manifest.format)));
    }
    Ok((manifest.precision, manifest.metadata))
}

/// Reads a checkpoint, converting stored values to `T` if needed.
pub fn load_checkpoint<T: Real>(dir: &Path) -> Result<Checkpoint<T>, TensorError> {
    let mpath = dir.join(MANIFEST);
    let text = fs::read_to_string(&mpath).map_err(|e| io_err(&mpath, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| io_err(&mpath, e))?;
    if manifest.format != CHECKPOINT_FORMAT {
        return Err(io_err(&mpath, format!("unknown format {:?}", manifest.format)));
    }
    let ppath = dir.join(PARAMS);
    let bytes = fs::read(&ppath).map_err(|e| io_err(&ppath, e))?;
    match manifest.precision.as_str() {
        "f32" => decode::<f32, T>(manifest, &bytes, &ppath),
        "f64" => decode::<f64, T>(manifest, &bytes, &ppath),
        other => Err(io_err(&mpath, format!("unknown precision {other:?}"))),
    }
}

fn decode<S: Real, T: Real>(manifest: Manifest, bytes: &[u8], path: &Path) -> Result<Checkpoint<T>, TensorError> {
    let expected: usize = manifest.params.iter().map(|p| p.shape[0] * p.shape[1] * S::BYTES).sum();
    if bytes.len() != expected {
        return Err(io_err(path, format!("expected {expected} bytes, found {}", bytes.len())));
    }
    let mut chunks = bytes.chunks_exact(S::BYTES);
    let mut names = Vec::with_capacity(manifest.params.len());
    let mut tensors = Vec::with_capacity(manifest.params.len());
    for p in manifest.params {
        let [r, c] = p.shape;
        let data = chunks
            .by_ref()
            .take(r * c)
            .map(|b| T::from_f64_lossy(S::read_le(b).to_f64_lossy()))
            .collect();
        tensors.push(Tensor::new(r, c, data)?);
        names.push(p.name);
    }
    Ok(Checkpoint {
        names,
        tensors,
        metadata: manifest.metadata,
    })
}
