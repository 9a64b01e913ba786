//! Versioned JSON checkpoints for named tensor collections.
//!
//! The on-disk layout is deliberately plain so checkpoints stay inspectable
//! and diffable:
//!
//! ```json
//! {
//!   "version": 1,
//!   "tensors": { "name": { "shape": [2, 3], "data": [ ... ] } },
//!   "meta": { ... }
//! }
//! ```
//!
//! Tensor maps are `BTreeMap`s and serde_json prints `f64` via the shortest
//! round-trippable decimal, so saving the same weights twice produces
//! byte-identical files.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    tensors: BTreeMap<String, Tensor>,
    #[serde(default)]
    meta: serde_json::Value,
}

pub fn save_checkpoint(
    path: &Path,
    tensors: &BTreeMap<String, Tensor>,
    meta: serde_json::Value,
) -> Result<()> {
    for (name, t) in tensors {
        if !t.is_finite() {
            return Err(Error::NonFinite(format!("tensor '{name}' in checkpoint")));
        }
    }
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        tensors: tensors.clone(),
        meta,
    };
    let body = serde_json::to_string_pretty(&file)?;
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(BTreeMap<String, Tensor>, serde_json::Value)> {
    let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: CheckpointFile = serde_json::from_str(&body).map_err(|e| Error::Format {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::Format {
            path: path.display().to_string(),
            detail: format!(
                "unsupported checkpoint version {} (expected {})",
                file.version, CHECKPOINT_VERSION
            ),
        });
    }
    for (name, t) in &file.tensors {
        if !t.is_finite() {
            return Err(Error::NonFinite(format!("tensor '{name}' in {}", path.display())));
        }
    }
    Ok((file.tensors, file.meta))
}
