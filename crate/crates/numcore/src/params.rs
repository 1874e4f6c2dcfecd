use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// A container of named parameter tensors in a fixed order.
///
/// `params` and `params_mut` must list the same tensors in the same order;
/// [`Parameters::bind`] relies on it to map tape leaves back to tensors.
pub trait Parameters {
    fn params(&self) -> Vec<(String, &Tensor)>;
    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)>;

    /// Records every parameter as a leaf, in `params` order.
    fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.params().into_iter().map(|(_, t)| tape.leaf(t)).collect()
    }

    /// Adds the tape's gradients into the tracked parameters' buffers.
    fn accumulate_grads(&mut self, tape: &Tape, vars: &[Var]) -> Result<()> {
        for ((_, t), v) in self.params_mut().into_iter().zip(vars) {
            if t.requires_grad() {
                if let Some(g) = tape.grad(*v) {
                    t.accumulate_grad(g)?;
                }
            }
        }
        Ok(())
    }

    fn zero_grads(&mut self) {
        for (_, t) in self.params_mut() {
            t.zero_grad();
        }
    }

    fn num_trainable(&self) -> usize {
        self.params()
            .iter()
            .filter(|(_, t)| t.requires_grad())
            .map(|(_, t)| t.len())
            .sum()
    }

    /// Global L2 norm of all populated gradients.
    fn grad_norm(&self) -> f64 {
        self.params()
            .iter()
            .filter_map(|(_, t)| t.grad())
            .flat_map(|g| g.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales gradients so their global norm is at most `max_norm`.
    /// Returns the norm before clipping.
    fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm && norm > 0.0 {
            let k = max_norm / norm;
            for (_, t) in self.params_mut() {
                if let Some(g) = t.grad_mut() {
                    g.iter_mut().for_each(|v| *v *= k);
                }
            }
        }
        norm
    }
}

/// A plain ordered list of named tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NamedTensors(pub Vec<(String, Tensor)>);

impl NamedTensors {
    pub fn new() -> Self {
        NamedTensors(Vec::new())
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor) {
        self.0.push((name.into(), t));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.0.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

impl Parameters for NamedTensors {
    fn params(&self) -> Vec<(String, &Tensor)> {
        self.0.iter().map(|(n, t)| (n.clone(), t)).collect()
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.0.iter_mut().map(|(n, t)| (n.clone(), t)).collect()
    }
}
