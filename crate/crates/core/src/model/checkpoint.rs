//! Versioned model checkpoints: JSON with the config, vocabulary sizes, and
//! named flat parameter arrays. f64 values round-trip bit-exactly through
//! serde_json, so save/load is lossless.

use super::{ForecastModel, ModelConfig, EDGE_VOCAB, NODE_VOCAB};
use crate::error::{Error, Result};
use crate::num::Real;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorFile {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    config: ModelConfig,
    node_vocab: usize,
    edge_vocab: usize,
    tensors: Vec<TensorFile>,
}

pub fn save_model<T: Real>(model: &ForecastModel<T>, path: &Path) -> Result<()> {
    let tensors = model
        .metas
        .iter()
        .map(|m| TensorFile {
            name: m.name.clone(),
            rows: m.view.rows,
            cols: m.view.cols,
            data: m
                .view
                .of(&model.params)
                .iter()
                .map(|p| p.to_f64_lossy())
                .collect(),
        })
        .collect();
    let file = CheckpointFile {
        version: CHECKPOINT_FORMAT_VERSION,
        config: model.cfg.clone(),
        node_vocab: NODE_VOCAB,
        edge_vocab: EDGE_VOCAB,
        tensors,
    };
    std::fs::write(path, serde_json::to_string(&file).expect("checkpoint serializes"))?;
    Ok(())
}

pub fn load_model<T: Real>(path: &Path) -> Result<ForecastModel<T>> {
    let file: CheckpointFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if file.version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::invalid_input(format!(
            "unsupported checkpoint version {}",
            file.version
        )));
    }
    if file.node_vocab != NODE_VOCAB || file.edge_vocab != EDGE_VOCAB {
        return Err(Error::invalid_input("checkpoint vocabulary sizes do not match"));
    }
    let mut model = ForecastModel::<T>::new(file.config)?;
    if file.tensors.len() != model.metas.len() {
        return Err(Error::invalid_input("checkpoint tensor list does not match the model"));
    }
    for (meta, tensor) in model.metas.clone().iter().zip(&file.tensors) {
        if meta.name != tensor.name
            || meta.view.rows != tensor.rows
            || meta.view.cols != tensor.cols
            || tensor.data.len() != meta.view.len()
        {
            return Err(Error::invalid_input(format!(
                "checkpoint tensor {} has mismatched shape",
                tensor.name
            )));
        }
        for (p, v) in meta
            .view
            .of_mut(&mut model.params)
            .iter_mut()
            .zip(&tensor.data)
        {
            *p = T::from_f64_lossy(*v);
        }
    }
    Ok(model)
}
