use numcore::{AdamConfig, AdamState, NumError, Parameters, Tape, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::batch::{predict_frames, select_rows, Frames, Scaling, TrainedModel};
use super::loss::{mse, mse_loss};
use crate::data::{SampleSet, Split, SplitRatios};
use crate::error::{Error, Result};
use crate::nn::{Model, ModelKind, Network};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
    /// Global gradient-norm ceiling; off when `None`.
    pub clip_norm: Option<f64>,
    pub ratios: SplitRatios,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::regular()
    }
}

impl TrainConfig {
    pub fn regular() -> Self {
        TrainConfig {
            lr: 1e-3,
            epochs: 70,
            batch_size: 16,
            seed: 0,
            clip_norm: None,
            ratios: SplitRatios::REGULAR,
        }
    }

    pub fn transfer() -> Self {
        TrainConfig {
            epochs: 150,
            ratios: SplitRatios::EVACUATION,
            ..TrainConfig::regular()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("epochs and batch size must be at least 1"));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::config(format!("clip norm must be positive, got {c}")));
            }
        }
        self.ratios.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    /// Parameters of the epoch with the lowest validation loss.
    pub trained: TrainedModel,
    pub history: Vec<EpochRecord>,
    /// 1-based.
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

fn diverged(epoch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Num(NumError::NonFinite { .. }) => Error::Divergence { epoch },
        e => e,
    }
}

fn check_split(samples: &SampleSet, split: &Split) -> Result<()> {
    if split.train.is_empty() {
        return Err(Error::EmptySamples("training split is empty".into()));
    }
    if let Some(&i) = split.train.iter().chain(&split.val).chain(&split.test).find(|&&i| i >= samples.len()) {
        return Err(Error::contract(format!("sample {i} is out of range for {} samples", samples.len())));
    }
    Ok(())
}

/// Minibatch ADAM on the scaled MSE; keeps the parameters of the epoch
/// with the strictly lowest validation loss (training loss when the
/// validation split is empty).
fn train_loop(
    mut model: Model,
    frames: &Frames,
    split: &Split,
    cfg: &TrainConfig,
    cache: Option<&Tensor>,
) -> Result<(Model, Vec<EpochRecord>, usize, f64)> {
    let mut adam = AdamState::new(
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
        &model,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order = split.train.clone();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Model)> = None;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut batch = frames.batch(chunk)?;
            if let Some(c) = cache {
                batch.pretrained = Some(select_rows(c, chunk)?);
            }
            let mut tape = Tape::new();
            let vars = model.bind(&mut tape);
            let pred = model.forward(&mut tape, &vars, &batch).map_err(diverged(epoch))?;
            let target = tape.constant(frames.targets(chunk)?);
            let loss = mse_loss(&mut tape, pred, target)?;
            let value = tape.value(loss).data()[0];
            if !value.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            tape.backward(loss)?;
            model.zero_grads();
            model.accumulate_grads(&tape, &vars)?;
            if let Some(c) = cfg.clip_norm {
                model.clip_grad_norm(c);
            }
            adam.step(&mut model)?;
            total += value * chunk.len() as f64;
        }
        let train_loss = total / order.len() as f64;
        let val_loss = if split.val.is_empty() {
            train_loss
        } else {
            let pred = predict_frames(&model, frames, &split.val, cache).map_err(diverged(epoch))?;
            mse(&pred, &frames.targets(&split.val)?)?
        };
        if !val_loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        log::debug!("epoch {epoch}: train {train_loss:.6e} val {val_loss:.6e}");
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if best.as_ref().is_none_or(|b| val_loss < b.0) {
            best = Some((val_loss, epoch, model.clone()));
        }
    }
    let (loss, epoch, mut model) = best.expect("at least one epoch");
    model.zero_grads();
    Ok((model, history, epoch, loss))
}

/// Trains a non-transfer model. Scalers are fitted on `split.train`.
pub fn fit(model: Model, samples: &SampleSet, split: &Split, cfg: &TrainConfig) -> Result<FitOutcome> {
    cfg.validate()?;
    if model.kind() == ModelKind::Transfer {
        return Err(Error::config("use fit_transfer for transfer models"));
    }
    check_split(samples, split)?;
    let mut scaling = Scaling::fit(samples, &split.train)?;
    scaling.demand = None;
    let frames = Frames::new(samples, &scaling, model.kind())?;
    let (model, history, best_epoch, best_val_loss) = train_loop(model, &frames, split, cfg, None)?;
    Ok(FitOutcome {
        trained: TrainedModel { model, scaling },
        history,
        best_epoch,
        best_val_loss,
    })
}

/// Outputs of the frozen block for every sample, scaled as the pretrained
/// model saw its inputs.
fn pretrained_outputs(model: &Model, samples: &SampleSet, scaling: &Scaling) -> Result<Option<Tensor>> {
    let Some(block) = model.transfer().and_then(|t| t.pretrained.as_ref()) else {
        return Err(Error::UnloadedModel);
    };
    if block.params().iter().any(|(_, t)| t.requires_grad()) {
        return Ok(None);
    }
    let graph = Model {
        spec: model.spec.pretrained_spec(),
        net: Network::DgcnLstm(block.clone()),
    };
    let frames = Frames::new(samples, scaling, ModelKind::DgcnLstm)?;
    let all: Vec<usize> = (0..samples.len()).collect();
    predict_frames(&graph, &frames, &all, None).map(Some)
}

/// Trains the demand branch of a transfer model on evacuation samples.
///
/// Inputs of the frozen block reuse `pretrained`'s feature scaler. Targets
/// and demand features get scalers fitted on `split.train`.
pub fn fit_transfer(
    model: Model,
    pretrained: &Scaling,
    samples: &SampleSet,
    split: &Split,
    cfg: &TrainConfig,
) -> Result<FitOutcome> {
    cfg.validate()?;
    if model.kind() != ModelKind::Transfer {
        return Err(Error::config(format!("fit_transfer needs a transfer model, got {}", model.kind())));
    }
    if samples.demand.is_none() {
        return Err(Error::contract("transfer training needs demand features"));
    }
    check_split(samples, split)?;
    let fitted = Scaling::fit(samples, &split.train)?;
    let scaling = Scaling {
        flow: fitted.flow,
        features: pretrained.features.clone(),
        demand: fitted.demand,
    };
    let cache = pretrained_outputs(&model, samples, &scaling)?;
    let frames = Frames::new(samples, &scaling, ModelKind::Transfer)?;
    let (model, history, best_epoch, best_val_loss) = train_loop(model, &frames, split, cfg, cache.as_ref())?;
    Ok(FitOutcome {
        trained: TrainedModel { model, scaling },
        history,
        best_epoch,
        best_val_loss,
    })
}
