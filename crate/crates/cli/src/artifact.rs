//! Versioned, checksummed JSON model files.
//!
//! A file is `{"format_version", "checksum", "body"}` serialized compactly.
//! The checksum is the SHA-256 of the compact body. Floats use the shortest
//! representation that parses back to the same bits, so a saved file is
//! canonical: loading re-serializes the body and insists on the same bytes.

use std::collections::BTreeMap;
use std::path::Path;

use evacflow::data::PipelineConfig;
use evacflow::nn::{init_params, GraphLstm, ModelKind, ModelSpec};
use evacflow::train::{MetricsReport, Scaling, TrainConfig, TrainedModel};
use numcore::{Parameters, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("model file {0} does not exist")]
    Missing(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("model file {0} is truncated")]
    Truncated(String),
    #[error("model file {path} is not valid JSON: {msg}")]
    Malformed { path: String, msg: String },
    #[error("model file {path} has format version {found}, this build reads version {expected}")]
    VersionMismatch { path: String, found: u64, expected: u32 },
    #[error("model file {path} is corrupted: checksum {found} does not match contents {computed}")]
    Checksum {
        path: String,
        found: String,
        computed: String,
    },
    #[error("model file {0} was modified: contents are not in canonical form")]
    NotCanonical(String),
    #[error("parameters do not fit the model spec: {0}")]
    Spec(String),
    #[error("parameter {0} holds a non-finite value and cannot be saved")]
    NonFinite(String),
    #[error("{what}: model has {model}, dataset has {data}")]
    DataMismatch { what: String, model: usize, data: usize },
}

pub type Result<T, E = ArtifactError> = std::result::Result<T, E>;

/// A parameter tensor in row-major order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
    pub data: Vec<f64>,
}

/// Error summary in flow units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub rmse: f64,
    pub mae: f64,
    pub r2: f64,
}

impl From<&MetricsReport> for Score {
    fn from(m: &MetricsReport) -> Self {
        Score {
            rmse: m.rmse,
            mae: m.mae,
            r2: m.r2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Seed of the split, the initial parameters and the shuffle.
    pub seed: u64,
    pub train: TrainConfig,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Keyed by split name.
    pub metrics: BTreeMap<String, Score>,
    /// SHA-256 over the dataset files the model was trained on.
    pub data_fingerprint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub spec: ModelSpec,
    /// Pipeline settings that produced the training samples; evaluation
    /// must window and scale data the same way.
    pub pipeline: PipelineConfig,
    pub scaling: Scaling,
    pub provenance: Provenance,
    pub params: Vec<NamedTensor>,
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    format_version: u32,
    checksum: String,
    body: ModelArtifact,
}

fn checksum(body: &ModelArtifact) -> String {
    let bytes = serde_json::to_vec(body).expect("plain data serializes");
    hex::encode(Sha256::digest(&bytes))
}

fn envelope_bytes(body: &ModelArtifact) -> Vec<u8> {
    #[derive(Serialize)]
    struct Out<'a> {
        format_version: u32,
        checksum: String,
        body: &'a ModelArtifact,
    }
    let out = Out {
        format_version: FORMAT_VERSION,
        checksum: checksum(body),
        body,
    };
    let mut bytes = serde_json::to_vec(&out).expect("plain data serializes");
    bytes.push(b'\n');
    bytes
}

impl ModelArtifact {
    pub fn new(trained: &TrainedModel, pipeline: PipelineConfig, provenance: Provenance) -> Self {
        let params = trained
            .model
            .params()
            .into_iter()
            .map(|(name, t)| NamedTensor {
                name,
                shape: t.shape().to_vec(),
                trainable: t.requires_grad(),
                data: t.data().to_vec(),
            })
            .collect();
        ModelArtifact {
            spec: trained.model.spec.clone(),
            pipeline,
            scaling: trained.scaling.clone(),
            provenance,
            params,
        }
    }

    /// The file image. JSON has no infinities or NaN, so those are refused.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if let Some(p) = self.params.iter().find(|p| p.data.iter().any(|v| !v.is_finite())) {
            return Err(ArtifactError::NonFinite(p.name.clone()));
        }
        Ok(envelope_bytes(self))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|source| ArtifactError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let name = path.display().to_string();
        if !path.exists() {
            return Err(ArtifactError::Missing(name));
        }
        let bytes = std::fs::read(path).map_err(|source| ArtifactError::Io {
            path: name.clone(),
            source,
        })?;
        Self::from_bytes(&bytes, &name)
    }

    /// Parses a file image; `name` only labels errors.
    pub fn from_bytes(bytes: &[u8], name: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| {
            if e.is_eof() {
                ArtifactError::Truncated(name.to_string())
            } else {
                ArtifactError::Malformed {
                    path: name.to_string(),
                    msg: e.to_string(),
                }
            }
        })?;
        let found = value.get("format_version").and_then(|v| v.as_u64());
        if found != Some(FORMAT_VERSION as u64) {
            return Err(ArtifactError::VersionMismatch {
                path: name.to_string(),
                found: found.unwrap_or(0),
                expected: FORMAT_VERSION,
            });
        }
        let env: Envelope = serde_json::from_value(value).map_err(|e| ArtifactError::Malformed {
            path: name.to_string(),
            msg: e.to_string(),
        })?;
        let computed = checksum(&env.body);
        if computed != env.checksum {
            return Err(ArtifactError::Checksum {
                path: name.to_string(),
                found: env.checksum,
                computed,
            });
        }
        if envelope_bytes(&env.body) != bytes {
            return Err(ArtifactError::NotCanonical(name.to_string()));
        }
        Ok(env.body)
    }

    /// Rebuilds the model, checking every parameter name and shape against
    /// what the model spec implies.
    pub fn to_trained(&self) -> Result<TrainedModel> {
        let spec_err = |e: evacflow::Error| ArtifactError::Spec(e.to_string());
        let mut model = init_params(&self.spec, self.spec.seed).map_err(spec_err)?;
        if self.spec.kind == ModelKind::Transfer && self.params.iter().any(|p| p.name.starts_with("pretrained.")) {
            let block_spec = self.spec.pretrained_spec();
            let block = GraphLstm::init(&block_spec, &mut ChaCha8Rng::seed_from_u64(0));
            model
                .transfer_mut()
                .expect("transfer kind")
                .attach(block)
                .map_err(spec_err)?;
        }
        let mut slots = model.params_mut();
        if slots.len() != self.params.len() {
            return Err(ArtifactError::Spec(format!(
                "{} kind expects {} parameter tensors, file has {}",
                self.spec.kind,
                slots.len(),
                self.params.len()
            )));
        }
        for ((name, t), p) in slots.iter_mut().zip(&self.params) {
            if *name != p.name || t.shape() != p.shape.as_slice() {
                return Err(ArtifactError::Spec(format!(
                    "expected {name} with shape {:?}, file has {} with shape {:?}",
                    t.shape(),
                    p.name,
                    p.shape
                )));
            }
            let mut restored = Tensor::new(p.shape.clone(), p.data.clone())
                .map_err(|e| ArtifactError::Spec(format!("{}: {e}", p.name)))?;
            restored.set_requires_grad(p.trainable);
            **t = restored;
        }
        drop(slots);
        Ok(TrainedModel {
            model,
            scaling: self.scaling.clone(),
        })
    }

    /// Checks that a prepared dataset has the shapes this model reads.
    pub fn check_data(&self, nodes: usize, channels: usize, demand_channels: Option<usize>) -> Result<()> {
        let s = &self.spec;
        let mismatch = |what: &str, model: usize, data: usize| ArtifactError::DataMismatch {
            what: what.to_string(),
            model,
            data,
        };
        if s.nodes != nodes {
            return Err(mismatch("detector count N", s.nodes, nodes));
        }
        if s.features != channels {
            return Err(mismatch("feature channels", s.features, channels));
        }
        if s.kind == ModelKind::Transfer {
            let d = demand_channels.unwrap_or(0);
            if s.demand_features != d {
                return Err(mismatch("demand channels", s.demand_features, d));
            }
        }
        Ok(())
    }
}
