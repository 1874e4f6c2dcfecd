use std::collections::BTreeSet;

use numcore::Tensor;
use serde::{Deserialize, Serialize};

use crate::data::{FeatureScaler, FlowScaler, SampleSet};
use crate::error::{Error, Result};
use crate::nn::{Batch, Model, ModelKind};

/// Scalers fitted on a training split; inputs and targets of a trained
/// model must pass through the same ones at inference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub flow: FlowScaler,
    pub features: FeatureScaler,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demand: Option<FeatureScaler>,
}

fn hours_of(samples: &SampleSet, idx: &[usize], inputs: bool) -> BTreeSet<usize> {
    idx.iter()
        .flat_map(|&s| if inputs { samples.input_hours(s) } else { samples.target_hours(s) })
        .collect()
}

fn fit_frame(frame: &Tensor, hours: &BTreeSet<usize>) -> FeatureScaler {
    let c = frame.shape()[2];
    let row = frame.shape()[1] * c;
    let data = frame.data();
    FeatureScaler::fit(
        c,
        hours
            .iter()
            .flat_map(|&t| data[t * row..(t + 1) * row].chunks_exact(c)),
    )
}

impl Scaling {
    /// Flow scaler over the training targets, feature scalers over the
    /// training inputs.
    pub fn fit(samples: &SampleSet, train: &[usize]) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptySamples("training split is empty".into()));
        }
        let inputs = hours_of(samples, train, true);
        Ok(Scaling {
            flow: Self::fit_flow(samples, train)?,
            features: fit_frame(&samples.features, &inputs),
            demand: samples.demand.as_ref().map(|d| fit_frame(d, &inputs)),
        })
    }

    pub(crate) fn fit_flow(samples: &SampleSet, train: &[usize]) -> Result<FlowScaler> {
        let n = samples.nodes();
        let flows = samples.flows.data();
        FlowScaler::fit(
            hours_of(samples, train, false)
                .into_iter()
                .flat_map(|t| flows[t * n..(t + 1) * n].iter().copied()),
        )
    }
}

/// Scaled copies of a sample set's frames, so batches are plain slices.
pub(crate) struct Frames<'a> {
    samples: &'a SampleSet,
    features: Tensor,
    demand: Option<Tensor>,
    /// Scaled targets `[H, N]`.
    targets: Tensor,
    kind: ModelKind,
}

impl<'a> Frames<'a> {
    pub(crate) fn new(samples: &'a SampleSet, scaling: &Scaling, kind: ModelKind) -> Result<Self> {
        if scaling.features.scale.len() != samples.channels() {
            return Err(Error::shape("feature scaler channels", samples.channels(), scaling.features.scale.len()));
        }
        let mut features = (*samples.features).clone();
        scaling.features.apply_in_place(features.data_mut());
        let demand = if kind == ModelKind::Transfer {
            let d = samples
                .demand
                .as_ref()
                .ok_or_else(|| Error::contract("transfer model needs demand features"))?;
            let s = scaling
                .demand
                .as_ref()
                .ok_or_else(|| Error::contract("transfer scaling has no demand scaler"))?;
            let mut d = (**d).clone();
            s.apply_in_place(d.data_mut());
            Some(d)
        } else {
            None
        };
        if kind.needs_adjacency() && samples.adjacency.is_none() {
            return Err(Error::contract(format!("{kind} needs a dynamic adjacency")));
        }
        if kind == ModelKind::GcnLstm && samples.static_adjacency.is_none() {
            return Err(Error::contract("gcnlstm needs a static adjacency"));
        }
        let mut targets = (*samples.flows).clone();
        targets.data_mut().iter_mut().for_each(|v| *v = scaling.flow.apply(*v));
        Ok(Frames {
            samples,
            features,
            demand,
            targets,
            kind,
        })
    }

    fn steps(frame: &Tensor, starts: impl Iterator<Item = usize> + Clone, len: usize) -> Result<Vec<Tensor>> {
        let row: usize = frame.shape()[1..].iter().product();
        let b = starts.clone().count();
        (0..len)
            .map(|k| {
                let mut data = Vec::with_capacity(b * row);
                for s in starts.clone() {
                    let t = s + k;
                    data.extend_from_slice(&frame.data()[t * row..(t + 1) * row]);
                }
                let mut shape = vec![b];
                shape.extend_from_slice(&frame.shape()[1..]);
                Ok(Tensor::new(shape, data)?)
            })
            .collect()
    }

    /// Inputs of the listed samples, one `[B, …]` tensor per input step.
    pub(crate) fn batch(&self, idx: &[usize]) -> Result<Batch> {
        let s = self.samples;
        let l = s.input_len;
        let n = s.nodes();
        let starts = idx.iter().map(|&i| s.starts[i]);
        let adjacency = match self.kind {
            ModelKind::DgcnLstm | ModelKind::Transfer => {
                let adj = s.adjacency.as_ref().expect("checked in new");
                let mut out = Vec::with_capacity(l);
                for k in 0..l {
                    let mut data = Vec::with_capacity(idx.len() * n * n);
                    for t in starts.clone() {
                        data.extend_from_slice(adj[t + k].data());
                    }
                    out.push(Tensor::new(vec![idx.len(), n, n], data)?);
                }
                Some(out)
            }
            ModelKind::GcnLstm => {
                let a = s.static_adjacency.as_ref().expect("checked in new").data();
                let data: Vec<f64> = (0..idx.len()).flat_map(|_| a.iter().copied()).collect();
                let t = Tensor::new(vec![idx.len(), n, n], data)?;
                Some(vec![t; l])
            }
            ModelKind::Lstm | ModelKind::ConvLstm => None,
        };
        Ok(Batch {
            inputs: Self::steps(&self.features, starts.clone(), l)?,
            demand: self.demand.as_ref().map(|d| Self::steps(d, starts, l)).transpose()?,
            adjacency,
            pretrained: None,
        })
    }

    /// Scaled targets `[B, p·N]`.
    pub(crate) fn targets(&self, idx: &[usize]) -> Result<Tensor> {
        let s = self.samples;
        let n = s.nodes();
        let p = s.horizon;
        let mut data = Vec::with_capacity(idx.len() * p * n);
        for &i in idx {
            let r = s.target_hours(i);
            data.extend_from_slice(&self.targets.data()[r.start * n..r.end * n]);
        }
        Ok(Tensor::new(vec![idx.len(), p * n], data)?)
    }
}

/// A model together with the scalers it was trained with.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub model: Model,
    pub scaling: Scaling,
}

/// Forward batches used outside training; large enough to amortize the
/// tape, small enough to bound memory.
pub(crate) const EVAL_BATCH: usize = 64;

impl TrainedModel {
    /// Scaled predictions `[n, p·N]` of the listed samples.
    pub fn predict_scaled(&self, samples: &SampleSet, idx: &[usize]) -> Result<Tensor> {
        self.predict_with(samples, idx, None)
    }

    /// Flow predictions `[n, p, N]` in veh/h, negative values clamped to 0.
    pub fn predict_flows(&self, samples: &SampleSet, idx: &[usize]) -> Result<Tensor> {
        let scaled = self.predict_scaled(samples, idx)?;
        let data = scaled.data().iter().map(|&v| self.scaling.flow.invert_clamped(v)).collect();
        Ok(Tensor::new(vec![idx.len(), samples.horizon, samples.nodes()], data)?)
    }

    /// Like [`TrainedModel::predict_scaled`], reusing cached pretrained
    /// outputs `[len, p·N]` indexed by sample when given.
    pub(crate) fn predict_with(&self, samples: &SampleSet, idx: &[usize], cache: Option<&Tensor>) -> Result<Tensor> {
        let frames = Frames::new(samples, &self.scaling, self.model.kind())?;
        predict_frames(&self.model, &frames, idx, cache)
    }
}

/// Rows `idx` of a `[len, w]` tensor.
pub(crate) fn select_rows(t: &Tensor, idx: &[usize]) -> Result<Tensor> {
    let w = t.shape()[1];
    let data = idx.iter().flat_map(|&i| t.data()[i * w..(i + 1) * w].iter().copied()).collect();
    Ok(Tensor::new(vec![idx.len(), w], data)?)
}

pub(crate) fn predict_frames(model: &Model, frames: &Frames, idx: &[usize], cache: Option<&Tensor>) -> Result<Tensor> {
    let width = model.spec.horizon * model.spec.nodes;
    let mut data = Vec::with_capacity(idx.len() * width);
    for chunk in idx.chunks(EVAL_BATCH) {
        let mut batch = frames.batch(chunk)?;
        if let Some(c) = cache {
            batch.pretrained = Some(select_rows(c, chunk)?);
        }
        data.extend_from_slice(model.predict(&batch)?.data());
    }
    Ok(Tensor::new(vec![idx.len(), width], data)?)
}
