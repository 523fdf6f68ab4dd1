//! Versioned JSON persistence for trained models.
//!
//! Numbers are written with round-trip precision, so `load(save(m)) == m`
//! bit for bit. Layers are stored as flat row-major weight arrays with
//! explicit shapes and checked against the network config on load.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding_space::EmbeddingGaussian;
use crate::error::{Error, Result};
use crate::mdn::{EmbeddingTable, NetworkConfig, NetworkParams};
use crate::trainer::{EpochLog, Scaling, TrainedModel};

pub const FORMAT_NAME: &str = "stochfet-model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub inputs: usize,
    pub outputs: usize,
    /// `outputs × inputs`, row-major.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub rows: usize,
    pub dim: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub network: NetworkConfig,
    pub layers: Vec<LayerRecord>,
    pub embeddings: Option<EmbeddingRecord>,
    pub scaling: Scaling,
    pub device_labels: Vec<i64>,
    #[serde(default)]
    pub embedding_gaussian: Option<EmbeddingGaussian>,
    #[serde(default)]
    pub training_log: Vec<EpochLog>,
}

impl ModelFile {
    pub fn from_model(model: &TrainedModel) -> Self {
        let values = model.params.values();
        let layers = model
            .params
            .shapes()
            .iter()
            .map(|s| LayerRecord {
                inputs: s.inputs,
                outputs: s.outputs,
                weights: values[s.weights..s.weights + s.inputs * s.outputs].to_vec(),
                biases: values[s.biases..s.biases + s.outputs].to_vec(),
            })
            .collect();
        let embeddings = model.config().embedding_enabled.then(|| EmbeddingRecord {
            rows: model.embeddings.rows(),
            dim: model.embeddings.dim(),
            values: model.embeddings.values().to_vec(),
        });
        Self {
            format: FORMAT_NAME.into(),
            version: FORMAT_VERSION,
            network: model.config().clone(),
            layers,
            embeddings,
            scaling: model.scaling,
            device_labels: model.device_labels.clone(),
            embedding_gaussian: model.embedding_gaussian.clone(),
            training_log: model.log.clone(),
        }
    }

    pub fn into_model(self) -> Result<TrainedModel> {
        let bad = |msg: String| Error::ModelFile(msg);
        if self.format != FORMAT_NAME {
            return Err(bad(format!("unrecognized format `{}`", self.format)));
        }
        if self.version != FORMAT_VERSION {
            return Err(Error::Version { found: self.version, expected: FORMAT_VERSION });
        }
        let cfg = self.network;
        cfg.validate()?;
        self.scaling.validate()?;
        let dims = cfg.layer_dims();
        if dims.len() != self.layers.len() {
            return Err(bad(format!("config implies {} layers, file has {}", dims.len(), self.layers.len())));
        }
        let mut flat = Vec::new();
        for (i, ((inputs, outputs), layer)) in dims.iter().zip(&self.layers).enumerate() {
            if (layer.inputs, layer.outputs) != (*inputs, *outputs) {
                return Err(bad(format!(
                    "layer {i} is {}x{}, config implies {outputs}x{inputs}",
                    layer.outputs, layer.inputs
                )));
            }
            if layer.weights.len() != inputs * outputs || layer.biases.len() != *outputs {
                return Err(bad(format!("layer {i} has inconsistent weight or bias counts")));
            }
            flat.extend_from_slice(&layer.weights);
            flat.extend_from_slice(&layer.biases);
        }
        let params = NetworkParams::from_flat(&cfg, flat)?;
        let devices = self.device_labels.len();
        let embeddings = match (cfg.embedding_enabled, self.embeddings) {
            (true, Some(e)) => {
                if e.rows != devices || e.dim != cfg.embedding_dim {
                    return Err(bad(format!(
                        "embedding table is {}x{}, expected {devices}x{}",
                        e.rows, e.dim, cfg.embedding_dim
                    )));
                }
                EmbeddingTable::from_flat(e.rows, e.dim, e.values)?
            }
            (true, None) => return Err(bad("embeddings enabled but no table stored".into())),
            (false, None) => EmbeddingTable::zeros(devices, 0),
            (false, Some(_)) => return Err(bad("embedding table stored but embeddings disabled".into())),
        };
        if let Some(g) = &self.embedding_gaussian {
            if g.dim() != cfg.active_embedding_dim() {
                return Err(bad(format!("embedding gaussian has dim {}", g.dim())));
            }
        }
        Ok(TrainedModel {
            params,
            embeddings,
            scaling: self.scaling,
            device_labels: self.device_labels,
            log: self.training_log,
            embedding_gaussian: self.embedding_gaussian,
        })
    }
}

pub fn to_json(model: &TrainedModel) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ModelFile::from_model(model))?)
}

pub fn from_json(text: &str) -> Result<TrainedModel> {
    let file: ModelFile = serde_json::from_str(text)?;
    file.into_model()
}

pub fn save_model(model: &TrainedModel, path: &Path) -> Result<()> {
    fs::write(path, to_json(model)?).map_err(Error::file(path))
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    from_json(&fs::read_to_string(path).map_err(Error::file(path))?)
}
