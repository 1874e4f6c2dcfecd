use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use evacflow::nn::ModelKind;

fn kind(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: evacflow::Error| e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "evacflow", version, about = "Traffic flow forecasting on dynamic detector graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Debug, Args)]
pub struct Common {
    /// JSON config file; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, created if absent.
    #[arg(long, default_value = "evacflow-out")]
    pub out: PathBuf,
    /// Leave the creation time out of model files.
    #[arg(long)]
    pub no_timestamps: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitName {
    Train,
    Val,
    Test,
    All,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset directory.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Detector count.
        #[arg(long)]
        nodes: Option<usize>,
    },
    /// Clean a dataset and write the cleaned copy, a report and the
    /// regular-phase adjacency.
    Clean {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
    },
    /// Train a regular-phase model.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// lstm, convlstm, gcnlstm or dgcnlstm.
        #[arg(long, value_parser = kind)]
        model: Option<ModelKind>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        hidden: Option<usize>,
    },
    /// Fine-tune a transfer model on the evacuation phase on top of a
    /// trained dgcnlstm.
    Transfer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Pretrained dgcnlstm model file.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        /// Demand LSTM width.
        #[arg(long)]
        hidden: Option<usize>,
    },
    /// Score a model file on one split of a dataset.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitName,
    },
    /// Write per-sample forecasts with the observed flows.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitName,
    },
    /// Compare analytic and finite-difference gradients on small random
    /// instances.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// One kind; every kind when absent.
        #[arg(long, value_parser = kind)]
        model: Option<ModelKind>,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
    },
    /// Train several models over several seeds and summarize test metrics.
    Experiment {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated regular-phase kinds.
        #[arg(long, value_parser = kind, value_delimiter = ',')]
        model: Vec<ModelKind>,
        /// Run the transfer experiment on top of this dgcnlstm model file.
        #[arg(long)]
        pretrained: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long)]
        jobs: Option<usize>,
        /// Number of seeds, counted up from --seed.
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Forecast every detector for the hours following each request hour.
    CongestionMap {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated first forecast hours, counted from the start of
        /// the phase the model forecasts.
        #[arg(long, value_delimiter = ',', required = true)]
        hours: Vec<usize>,
    },
}
