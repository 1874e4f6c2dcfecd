//! Network-wide traffic flow forecasting on dynamic detector graphs.
//!
//! * [`graph`] turns per-hour detector speeds into travel-time weighted,
//!   symmetrically normalized adjacency matrices.
//! * [`nn`] holds the recurrent models: the dynamic graph-convolution LSTM,
//!   its gated transfer extension for evacuation periods, and the LSTM,
//!   ConvLSTM and static GCN-LSTM baselines.
//! * [`data`] cleans detector series, extracts regular and evacuation-demand
//!   features, windows samples, and generates synthetic scenarios.
//! * [`train`] fits models with ADAM, evaluates RMSE/MAE/R² and runs
//!   multi-seed experiments.

// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops mirror the math in the numeric kernels.
#![allow(clippy::needless_range_loop)]

pub mod data;
mod error;
pub mod graph;
pub mod nn;
pub mod train;

pub use error::{Error, Result};
