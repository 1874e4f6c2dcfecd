use std::ops::Range;
use std::sync::Arc;

use numcore::Tensor;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitRatios {
    pub const REGULAR: SplitRatios = SplitRatios {
        train: 0.90,
        val: 0.05,
        test: 0.05,
    };
    pub const EVACUATION: SplitRatios = SplitRatios {
        train: 0.80,
        val: 0.10,
        test: 0.10,
    };

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|r| !(*r >= 0.0)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "split ratios must be non-negative and sum to 1, got {parts:?}"
            )));
        }
        Ok(())
    }
}

/// Sample indices per partition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles `0..n` with a seeded ChaCha8 stream and cuts it into
/// `floor(n·train)`, `round(n·val)` and the remainder.
pub fn split_samples(n: usize, ratios: SplitRatios, seed: u64) -> Result<Split> {
    ratios.validate()?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (n as f64 * ratios.train).floor() as usize;
    let n_val = ((n as f64 * ratios.val).round() as usize).min(n - n_train);
    let split = Split {
        train: idx[..n_train].to_vec(),
        val: idx[n_train..n_train + n_val].to_vec(),
        test: idx[n_train + n_val..].to_vec(),
    };
    let wanted = [(ratios.train, &split.train, "train"), (ratios.val, &split.val, "validation"), (ratios.test, &split.test, "test")];
    if let Some((_, _, name)) = wanted.iter().find(|(r, part, _)| *r > 0.0 && part.is_empty()) {
        return Err(Error::EmptySamples(format!("{n} samples leave the {name} split empty")));
    }
    Ok(split)
}

/// Sliding windows over aligned hourly frames. Sample `s` reads inputs at
/// hours `starts[s] .. starts[s] + l` and targets at the following `p`
/// hours. Frames are shared, so clones are cheap.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub input_len: usize,
    pub horizon: usize,
    /// `[H, N, c]`.
    pub features: Arc<Tensor>,
    /// `[H, N, c_d]`.
    pub demand: Option<Arc<Tensor>>,
    /// Target flows `[H, N]`.
    pub flows: Arc<Tensor>,
    /// Normalized adjacency per hour, `H` matrices `[N, N]`.
    pub adjacency: Option<Arc<Vec<Tensor>>>,
    /// Time-invariant normalized adjacency `[N, N]`.
    pub static_adjacency: Option<Arc<Tensor>>,
    pub starts: Vec<usize>,
}

/// Pairs `l` input hours with the next `p` target hours, advancing by
/// `stride`. `features: [H, N, c]`, `flows: [H, N]`.
pub fn window_samples(features: Tensor, flows: Tensor, l: usize, p: usize, stride: usize) -> Result<SampleSet> {
    if l == 0 || p == 0 || stride == 0 {
        return Err(Error::config("input length, horizon and stride must be at least 1"));
    }
    let h = match (features.shape(), flows.shape()) {
        ([h, n, _], [hf, nf]) if h == hf && n == nf => *h,
        (a, b) => return Err(Error::shape("flows", format!("[H, N] matching features {a:?}"), format!("{b:?}"))),
    };
    if h < l + p {
        return Err(Error::EmptySamples(format!("{h} hours cannot hold a window of {l} + {p}")));
    }
    let starts = (0..=h - l - p).step_by(stride).collect();
    Ok(SampleSet {
        input_len: l,
        horizon: p,
        features: Arc::new(features),
        demand: None,
        flows: Arc::new(flows),
        adjacency: None,
        static_adjacency: None,
        starts,
    })
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn hours(&self) -> usize {
        self.features.shape()[0]
    }

    pub fn nodes(&self) -> usize {
        self.features.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.features.shape()[2]
    }

    pub fn input_hours(&self, s: usize) -> Range<usize> {
        self.starts[s]..self.starts[s] + self.input_len
    }

    pub fn target_hours(&self, s: usize) -> Range<usize> {
        let t0 = self.starts[s] + self.input_len;
        t0..t0 + self.horizon
    }

    pub fn with_demand(mut self, demand: Tensor) -> Result<Self> {
        self.check_frame("demand", &demand)?;
        self.demand = Some(Arc::new(demand));
        Ok(self)
    }

    pub fn with_adjacency(mut self, adjacency: Vec<Tensor>) -> Result<Self> {
        if adjacency.len() != self.hours() {
            return Err(Error::shape("adjacency sequence length", self.hours(), adjacency.len()));
        }
        let n = self.nodes();
        if let Some(a) = adjacency.iter().find(|a| a.shape() != [n, n]) {
            return Err(Error::shape("adjacency", format!("[{n}, {n}]"), format!("{:?}", a.shape())));
        }
        self.adjacency = Some(Arc::new(adjacency));
        Ok(self)
    }

    pub fn with_static_adjacency(mut self, adjacency: Tensor) -> Result<Self> {
        let n = self.nodes();
        if adjacency.shape() != [n, n] {
            return Err(Error::shape("static adjacency", format!("[{n}, {n}]"), format!("{:?}", adjacency.shape())));
        }
        self.static_adjacency = Some(Arc::new(adjacency));
        Ok(self)
    }

    fn check_frame(&self, what: &str, t: &Tensor) -> Result<()> {
        match t.shape() {
            [h, n, _] if *h == self.hours() && *n == self.nodes() => Ok(()),
            s => Err(Error::shape(
                what,
                format!("[{}, {}, c]", self.hours(), self.nodes()),
                format!("{s:?}"),
            )),
        }
    }

    fn gather(frame: &Tensor, hours: impl Iterator<Item = Range<usize>>, count: usize, len: usize) -> Tensor {
        let row: usize = frame.shape()[1..].iter().product();
        let mut data = Vec::with_capacity(count * len * row);
        for r in hours {
            data.extend_from_slice(&frame.data()[r.start * row..r.end * row]);
        }
        let mut shape = vec![count, len];
        shape.extend_from_slice(&frame.shape()[1..]);
        Tensor::new(shape, data).expect("window shapes are consistent")
    }

    /// Inputs `[n, l, N, c]` of the listed samples.
    pub fn materialize_inputs(&self, samples: &[usize]) -> Tensor {
        Self::gather(&self.features, samples.iter().map(|&s| self.input_hours(s)), samples.len(), self.input_len)
    }

    /// Demand inputs `[n, l, N, c_d]` of the listed samples.
    pub fn materialize_demand(&self, samples: &[usize]) -> Option<Tensor> {
        let d = self.demand.as_ref()?;
        Some(Self::gather(d, samples.iter().map(|&s| self.input_hours(s)), samples.len(), self.input_len))
    }

    /// Targets `[n, p, N]` of the listed samples.
    pub fn materialize_targets(&self, samples: &[usize]) -> Tensor {
        Self::gather(&self.flows, samples.iter().map(|&s| self.target_hours(s)), samples.len(), self.horizon)
    }

    /// The same windows restricted to `samples` (in that order).
    pub fn subset(&self, samples: &[usize]) -> SampleSet {
        SampleSet {
            starts: samples.iter().map(|&s| self.starts[s]).collect(),
            ..self.clone()
        }
    }
}
