//! Self-describing checkpoint files: format version, embedded config,
//! named tensor shapes, and row-major values in decimal text that
//! round-trips f64 exactly (17 significant digits).

use crate::error::{Error, Result};
use crate::numerics::ParameterStore;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    values: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct Document<C> {
    format: String,
    version: u32,
    config: C,
    tensors: Vec<TensorRecord>,
}

fn render_value(v: f64) -> String {
    // 17 significant digits: enough to reproduce any f64 exactly
    format!("{v:.16e}")
}

pub fn save_checkpoint<C: Serialize>(
    store: &ParameterStore,
    config: &C,
    path: &Path,
) -> Result<()> {
    let mut tensors = Vec::with_capacity(store.len());
    for id in 0..store.len() {
        let t = store.value(id);
        if !t.all_finite() {
            return Err(Error::NonFiniteValue(store.name(id).to_string()));
        }
        tensors.push(TensorRecord {
            name: store.name(id).to_string(),
            shape: t.shape.clone(),
            values: t.data.iter().map(|&v| render_value(v)).collect(),
        });
    }
    let doc = Document {
        format: "rlntm-checkpoint".to_string(),
        version: CHECKPOINT_VERSION,
        config,
        tensors,
    };
    let text = serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::CheckpointCorrupt(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_checkpoint<C: DeserializeOwned>(path: &Path) -> Result<(ParameterStore, C)> {
    let text = std::fs::read_to_string(path)?;
    let doc: Document<C> =
        serde_json::from_str(&text).map_err(|e| Error::CheckpointCorrupt(e.to_string()))?;
    if doc.version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion {
            found: doc.version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let spec: Vec<(String, Vec<usize>)> = doc
        .tensors
        .iter()
        .map(|t| (t.name.clone(), t.shape.clone()))
        .collect();
    let mut store = ParameterStore::from_spec(&spec);
    for (id, record) in doc.tensors.iter().enumerate() {
        let expected: usize = record.shape.iter().product();
        if record.values.len() != expected {
            return Err(Error::CheckpointShape {
                name: record.name.clone(),
                found: vec![record.values.len()],
                expected: vec![expected],
            });
        }
        let tensor = store.value_mut(id);
        for (slot, text) in tensor.data.iter_mut().zip(&record.values) {
            *slot = text.parse::<f64>().map_err(|e| {
                Error::CheckpointCorrupt(format!("bad value `{text}` in `{}`: {e}", record.name))
            })?;
        }
    }
    Ok((store, doc.config))
}

/// Validate that a loaded store matches the parameter spec the caller's
/// configuration implies; names must appear with identical shapes.
pub fn validate_shapes(store: &ParameterStore, spec: &[(String, Vec<usize>)]) -> Result<()> {
    for (name, shape) in spec {
        match store.id(name) {
            Some(id) if &store.value(id).shape == shape => {}
            Some(id) => {
                return Err(Error::CheckpointShape {
                    name: name.clone(),
                    found: store.value(id).shape.clone(),
                    expected: shape.clone(),
                })
            }
            None => {
                return Err(Error::CheckpointShape {
                    name: name.clone(),
                    found: Vec::new(),
                    expected: shape.clone(),
                })
            }
        }
    }
    Ok(())
}
