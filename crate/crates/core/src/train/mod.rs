//! Training, evaluation and multi-seed experiments.

mod batch;
mod experiment;
mod fit;
mod loss;
mod metrics;

pub use batch::{Scaling, TrainedModel};
pub use experiment::{
    run_experiment, run_transfer_experiment, ExperimentConfig, ExperimentEntry, ExperimentResult, ModelSummary,
    RunRecord, Stat, PRETRAINED_RUN, TRANSFER_RUN,
};
pub use fit::{fit, fit_transfer, EpochRecord, FitOutcome, TrainConfig};
pub use loss::{mse, mse_loss};
pub use metrics::{evaluate, metrics, MetricsReport};
