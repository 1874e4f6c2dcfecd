//! JSON run configurations. Every field has a default, unknown fields are
//! rejected, and command-line flags override whatever the file sets.

use std::path::Path;

use evacflow::data::{PipelineConfig, Prepared};
use evacflow::nn::{ModelKind, ModelSpec};
use evacflow::train::TrainConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Architecture overrides on top of [`ModelSpec::new`] defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOptions {
    pub hidden_size: Option<usize>,
    pub layers: Option<usize>,
    pub kernel_size: Option<usize>,
    pub conv_channels: Option<usize>,
    pub demand_hidden: Option<usize>,
}

impl ModelOptions {
    /// Spec for `kind` sized to the prepared regular samples, with the
    /// network's corridors as the node order.
    pub fn spec(&self, kind: ModelKind, data: &Prepared, seed: u64) -> ModelSpec {
        let s = &data.regular;
        let base = ModelSpec::new(kind, s.nodes(), s.input_len, s.horizon, s.channels());
        ModelSpec {
            hidden_size: self.hidden_size.unwrap_or(base.hidden_size),
            layers: self.layers.unwrap_or(base.layers),
            kernel_size: self.kernel_size.unwrap_or(base.kernel_size),
            conv_channels: self.conv_channels.unwrap_or(base.conv_channels),
            demand_hidden: self.demand_hidden.unwrap_or(base.demand_hidden),
            demand_features: data
                .evacuation
                .as_ref()
                .and_then(|e| e.demand.as_ref())
                .map_or(base.demand_features, |d| d.shape()[2]),
            node_order: data.network.corridor_order(),
            seed,
            ..base
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRunConfig {
    pub seed: u64,
    pub model: ModelKind,
    pub architecture: ModelOptions,
    pub pipeline: PipelineConfig,
    /// `train.seed` is replaced by the run seed.
    pub train: TrainConfig,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        TrainRunConfig {
            seed: 0,
            model: ModelKind::DgcnLstm,
            architecture: ModelOptions::default(),
            pipeline: PipelineConfig::default(),
            train: TrainConfig::regular(),
        }
    }
}

/// The pipeline always comes from the pretrained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferRunConfig {
    pub seed: u64,
    pub demand_hidden: Option<usize>,
    pub train: TrainConfig,
}

impl Default for TransferRunConfig {
    fn default() -> Self {
        TransferRunConfig {
            seed: 0,
            demand_hidden: None,
            train: TrainConfig::transfer(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentRunConfig {
    /// Regular-phase architectures; ignored in transfer mode.
    pub models: Vec<ModelKind>,
    pub architecture: ModelOptions,
    pub pipeline: PipelineConfig,
    pub seeds: Vec<u64>,
    pub jobs: usize,
    /// Defaults to the regular or transfer protocol depending on the mode.
    pub train: Option<TrainConfig>,
}

impl Default for ExperimentRunConfig {
    fn default() -> Self {
        ExperimentRunConfig {
            models: vec![ModelKind::Lstm, ModelKind::ConvLstm, ModelKind::GcnLstm, ModelKind::DgcnLstm],
            architecture: ModelOptions::default(),
            pipeline: PipelineConfig::default(),
            seeds: (0..5).collect(),
            jobs: 1,
            train: None,
        }
    }
}

/// Reads `path` into `T`, or returns `T::default()` without a path.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))
}
