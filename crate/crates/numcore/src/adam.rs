use crate::error::{NumError, Result};
use crate::params::Parameters;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected ADAM moments for one parameter container.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, model: &impl Parameters) -> Self {
        let zeros: Vec<Vec<f64>> = model
            .params()
            .iter()
            .map(|(_, t)| vec![0.0; t.len()])
            .collect();
        AdamState {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, i: usize) -> &[f64] {
        &self.first[i]
    }

    pub fn second_moment(&self, i: usize) -> &[f64] {
        &self.second[i]
    }

    /// One update of every trainable parameter. Gradients are left in place.
    pub fn step(&mut self, model: &mut impl Parameters) -> Result<()> {
        let mut params = model.params_mut();
        if params.len() != self.first.len() {
            return Err(NumError::contract(format!(
                "optimizer tracks {} tensors, model has {}",
                self.first.len(),
                params.len()
            )));
        }
        for (i, (name, t)) in params.iter().enumerate() {
            if !t.requires_grad() {
                continue;
            }
            if t.len() != self.first[i].len() {
                return Err(NumError::Shape {
                    op: "adam_step",
                    lhs: t.shape().to_vec(),
                    rhs: vec![self.first[i].len()],
                });
            }
            if t.grad().is_none() {
                return Err(NumError::MissingGrad(name.clone()));
            }
        }

        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (i, (_, t)) in params.iter_mut().enumerate() {
            if !t.requires_grad() {
                continue;
            }
            let grad = t.grad().expect("checked above").to_vec();
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            for (j, w) in t.data_mut().iter_mut().enumerate() {
                let g = grad[j];
                m[j] = beta1 * m[j] + (1.0 - beta1) * g;
                v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}
