//! Recurrent forecasting models on detector graphs.
//!
//! Every model maps `l` hourly input steps to a `p`-hour forecast for all
//! `N` detectors, emitted as `[B, p·N]` in scaled flow space with index
//! `step·N + node`.

mod layers;
mod lstm;
mod model;
mod spec;

pub use layers::{conv1d_node, graph_conv, Dense};
pub use lstm::LstmParams;
pub use model::{
    dgcn_lstm_forward, init_params, transfer_forward, Batch, ConvLstm, GraphLstm, LstmModel, Model, Network,
    TransferModel,
};
pub use spec::{ModelKind, ModelSpec};
