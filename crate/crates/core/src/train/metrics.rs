use serde::{Deserialize, Serialize};

use super::batch::TrainedModel;
use crate::data::SampleSet;
use crate::error::{Error, Result};

/// Errors in flow units (veh/h).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rmse: f64,
    pub mae: f64,
    /// `1 - SSE/SST` over every cell; 0 when the targets are constant and
    /// the prediction is not exact.
    pub r2: f64,
    pub per_step_rmse: Vec<f64>,
    pub per_step_mae: Vec<f64>,
    pub per_node_rmse: Vec<f64>,
    pub samples: usize,
}

/// Metrics of `pred` against `truth`, both flattened `[samples, p, N]`.
pub fn metrics(pred: &[f64], truth: &[f64], horizon: usize, nodes: usize) -> Result<MetricsReport> {
    if pred.len() != truth.len() {
        return Err(Error::shape("prediction length", truth.len(), pred.len()));
    }
    let cell = horizon * nodes;
    if pred.is_empty() || cell == 0 || !pred.len().is_multiple_of(cell) {
        return Err(Error::EmptySamples(format!(
            "{} values do not form whole samples of {horizon} × {nodes}",
            pred.len()
        )));
    }
    let samples = pred.len() / cell;
    let mut step_sq = vec![0.0; horizon];
    let mut step_abs = vec![0.0; horizon];
    let mut node_sq = vec![0.0; nodes];
    for (i, (p, t)) in pred.iter().zip(truth).enumerate() {
        let e = p - t;
        let (step, node) = ((i % cell) / nodes, i % nodes);
        step_sq[step] += e * e;
        step_abs[step] += e.abs();
        node_sq[node] += e * e;
    }
    let total = pred.len() as f64;
    let sse: f64 = step_sq.iter().sum();
    let mean = truth.iter().sum::<f64>() / total;
    let sst: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    let r2 = if sst > 0.0 {
        1.0 - sse / sst
    } else if sse == 0.0 {
        1.0
    } else {
        0.0
    };
    let per_step = (samples * nodes) as f64;
    Ok(MetricsReport {
        rmse: (sse / total).sqrt(),
        mae: step_abs.iter().sum::<f64>() / total,
        r2,
        per_step_rmse: step_sq.iter().map(|s| (s / per_step).sqrt()).collect(),
        per_step_mae: step_abs.iter().map(|s| s / per_step).collect(),
        per_node_rmse: node_sq.iter().map(|s| (s / (samples * horizon) as f64).sqrt()).collect(),
        samples,
    })
}

/// Metrics of a trained model's clamped flow predictions on the listed
/// samples.
pub fn evaluate(state: &TrainedModel, samples: &SampleSet, idx: &[usize]) -> Result<MetricsReport> {
    if idx.is_empty() {
        return Err(Error::EmptySamples("evaluation split is empty".into()));
    }
    let pred = state.predict_flows(samples, idx)?;
    let truth = samples.materialize_targets(idx);
    metrics(pred.data(), truth.data(), samples.horizon, samples.nodes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_mean_predictions() {
        let truth = [1.0, 2.0, 3.0, 4.0];
        let m = metrics(&truth, &truth, 2, 2).unwrap();
        assert_eq!((m.rmse, m.mae, m.r2), (0.0, 0.0, 1.0));
        let m = metrics(&[2.5; 4], &truth, 2, 2).unwrap();
        assert_eq!(m.r2, 0.0);
        assert!(m.rmse >= m.mae);
        assert_eq!(m.per_step_rmse.len(), 2);
        assert_eq!(m.per_node_rmse.len(), 2);
    }

    #[test]
    fn empty_is_an_error() {
        assert!(matches!(metrics(&[], &[], 1, 1), Err(Error::EmptySamples(_))));
    }
}
