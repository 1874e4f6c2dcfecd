use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lstm,
    ConvLstm,
    GcnLstm,
    DgcnLstm,
    Transfer,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Lstm,
        ModelKind::ConvLstm,
        ModelKind::GcnLstm,
        ModelKind::DgcnLstm,
        ModelKind::Transfer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Lstm => "lstm",
            ModelKind::ConvLstm => "convlstm",
            ModelKind::GcnLstm => "gcnlstm",
            ModelKind::DgcnLstm => "dgcnlstm",
            ModelKind::Transfer => "transfer",
        }
    }

    /// Whether batches must carry an adjacency sequence.
    pub fn needs_adjacency(self) -> bool {
        matches!(self, ModelKind::GcnLstm | ModelKind::DgcnLstm | ModelKind::Transfer)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown model kind '{s}' (expected lstm, convlstm, gcnlstm, dgcnlstm or transfer)"
                ))
            })
    }
}

/// Architecture hyperparameters. For `transfer`, `hidden_size` describes the
/// pretrained graph block and `demand_hidden` the demand LSTM.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Detector count N.
    pub nodes: usize,
    /// Input window length l in hours.
    pub input_len: usize,
    /// Forecast horizon p in hours.
    pub horizon: usize,
    /// Regular feature channels c.
    pub features: usize,
    /// Demand feature channels c_d.
    pub demand_features: usize,
    pub hidden_size: usize,
    /// Stacked LSTM layers; only the plain LSTM baseline uses more than one.
    pub layers: usize,
    pub kernel_size: usize,
    /// Output channels of the ConvLSTM node convolution.
    pub conv_channels: usize,
    pub demand_hidden: usize,
    /// Corridors as lists of node indices in milepost order. Empty means a
    /// single corridor in index order.
    #[serde(default)]
    pub node_order: Vec<Vec<usize>>,
    pub seed: u64,
}

impl ModelSpec {
    /// Defaults: hidden size N·p, two layers for the plain LSTM, kernel 3.
    pub fn new(kind: ModelKind, nodes: usize, input_len: usize, horizon: usize, features: usize) -> Self {
        ModelSpec {
            kind,
            nodes,
            input_len,
            horizon,
            features,
            demand_features: crate::data::DEMAND_FEATURES,
            hidden_size: nodes * horizon,
            layers: if kind == ModelKind::Lstm { 2 } else { 1 },
            kernel_size: 3,
            conv_channels: features,
            demand_hidden: nodes * horizon,
            node_order: Vec::new(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("nodes", self.nodes),
            ("input_len", self.input_len),
            ("horizon", self.horizon),
            ("features", self.features),
            ("hidden_size", self.hidden_size),
            ("layers", self.layers),
            ("conv_channels", self.conv_channels),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("{name} must be at least 1")));
            }
        }
        if self.kernel_size.is_multiple_of(2) {
            return Err(Error::config(format!("kernel_size must be odd, got {}", self.kernel_size)));
        }
        if self.kind == ModelKind::Transfer && (self.demand_features == 0 || self.demand_hidden == 0) {
            return Err(Error::config("transfer needs demand_features and demand_hidden >= 1"));
        }
        if !self.node_order.is_empty() {
            super::layers::check_order(&self.node_order, self.nodes)?;
        }
        Ok(())
    }

    pub fn corridors(&self) -> Vec<Vec<usize>> {
        if self.node_order.is_empty() {
            vec![(0..self.nodes).collect()]
        } else {
            self.node_order.clone()
        }
    }

    /// The graph block's spec inside a transfer model.
    pub fn pretrained_spec(&self) -> ModelSpec {
        ModelSpec {
            kind: ModelKind::DgcnLstm,
            layers: 1,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.name()));
        }
        assert!("gru".parse::<ModelKind>().is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let mut s = ModelSpec::new(ModelKind::ConvLstm, 4, 6, 6, 12);
        s.node_order = vec![vec![1, 0], vec![3, 2]];
        let back: ModelSpec = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        s.validate().unwrap();
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = ModelSpec::new(ModelKind::DgcnLstm, 4, 6, 6, 12);
        s.kernel_size = 2;
        assert!(s.validate().is_err());
        let mut s = ModelSpec::new(ModelKind::DgcnLstm, 4, 0, 6, 12);
        assert!(s.validate().is_err());
        s.input_len = 1;
        s.node_order = vec![vec![0, 1, 1, 3]];
        assert!(s.validate().is_err());
    }
}
