use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Affine map of flows onto `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowScaler {
    pub min: f64,
    pub max: f64,
}

impl FlowScaler {
    pub fn fit(values: impl IntoIterator<Item = f64>) -> Result<Self> {
        let (min, max) = values
            .into_iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if !(min.is_finite() && max.is_finite()) {
            return Err(Error::EmptySamples("no finite values to fit a flow scaler".into()));
        }
        if max == min {
            return Err(Error::DegenerateScaler(min));
        }
        Ok(FlowScaler { min, max })
    }

    pub fn apply(&self, x: f64) -> f64 {
        2.0 * (x - self.min) / (self.max - self.min) - 1.0
    }

    pub fn invert(&self, s: f64) -> f64 {
        (s + 1.0) / 2.0 * (self.max - self.min) + self.min
    }

    /// Inverse map with negative flows clamped to 0.
    pub fn invert_clamped(&self, s: f64) -> f64 {
        self.invert(s).max(0.0)
    }
}

/// Per-channel division by the largest absolute training value, so every
/// channel lands in `[-1, 1]`. All-zero channels are left as they are.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub scale: Vec<f64>,
}

impl FeatureScaler {
    /// `rows` yields feature vectors of length `channels`.
    pub fn fit<'a>(channels: usize, rows: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let mut scale = vec![0.0f64; channels];
        for row in rows {
            for (s, v) in scale.iter_mut().zip(row) {
                *s = s.max(v.abs());
            }
        }
        for s in &mut scale {
            if *s == 0.0 {
                *s = 1.0;
            }
        }
        FeatureScaler { scale }
    }

    pub fn identity(channels: usize) -> Self {
        FeatureScaler {
            scale: vec![1.0; channels],
        }
    }

    /// Scales a row-major buffer whose last axis is the channel axis.
    pub fn apply_in_place(&self, data: &mut [f64]) {
        let c = self.scale.len();
        for (i, v) in data.iter_mut().enumerate() {
            *v /= self.scale[i % c];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_clamp() {
        let s = FlowScaler::fit([100.0, 300.0, 200.0]).unwrap();
        assert_eq!(s.apply(100.0), -1.0);
        assert_eq!(s.apply(300.0), 1.0);
        assert!((s.invert_clamped(-1.2) - 80.0).abs() < 1e-12);
        let s = FlowScaler::fit([10.0, 50.0]).unwrap();
        assert_eq!(s.invert_clamped(-1.5), 0.0);
        assert!(matches!(FlowScaler::fit([5.0, 5.0]), Err(Error::DegenerateScaler(_))));
    }

    #[test]
    fn feature_scaler_uses_max_abs() {
        let rows = [vec![2.0, -8.0, 0.0], vec![-4.0, 1.0, 0.0]];
        let s = FeatureScaler::fit(3, rows.iter().map(Vec::as_slice));
        assert_eq!(s.scale, vec![4.0, 8.0, 1.0]);
        let mut d = vec![2.0, -8.0, 0.0];
        s.apply_in_place(&mut d);
        assert_eq!(d, vec![0.5, -1.0, 0.0]);
    }
}
