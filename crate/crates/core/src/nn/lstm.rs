use numcore::{Parameters, Tape, Tensor, Var};
use rand::Rng;

use super::layers::{uniform, VarCursor};
use crate::error::{Error, Result};

/// One LSTM layer with fused gate weights in the order input, forget,
/// output, candidate: `w_ih: [in, 4H]`, `w_hh: [H, 4H]`, `bias: [4H]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub w_ih: Tensor,
    pub w_hh: Tensor,
    pub bias: Tensor,
}

impl LstmParams {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        LstmParams {
            w_ih: Tensor::zeros(vec![input_size, 4 * hidden_size]).with_grad(true),
            w_hh: Tensor::zeros(vec![hidden_size, 4 * hidden_size]).with_grad(true),
            bias: Tensor::zeros(vec![4 * hidden_size]).with_grad(true),
        }
    }

    /// Uniform `±1/√fan_in` weights; forget-gate biases start at 1.
    pub fn init(input_size: usize, hidden_size: usize, rng: &mut impl Rng) -> Self {
        let h = hidden_size;
        let mut bias = uniform(vec![4 * h], h, rng);
        bias.data_mut()[h..2 * h].fill(1.0);
        LstmParams {
            w_ih: uniform(vec![input_size, 4 * h], input_size, rng),
            w_hh: uniform(vec![h, 4 * h], h, rng),
            bias,
        }
    }

    pub fn input_size(&self) -> usize {
        self.w_ih.shape()[0]
    }

    pub fn hidden_size(&self) -> usize {
        self.w_hh.shape()[0]
    }

    /// One step on plain vectors: `x: [in]`, `h, c: [H]`.
    pub fn step(&self, x: &Tensor, h: &Tensor, c: &Tensor) -> Result<(Tensor, Tensor)> {
        let (input, hidden) = (self.input_size(), self.hidden_size());
        for (what, t, want) in [("x_t", x, input), ("h_prev", h, hidden), ("c_prev", c, hidden)] {
            if t.shape() != [want] {
                return Err(Error::shape(format!("lstm_step {what}"), format!("[{want}]"), format!("{:?}", t.shape())));
            }
        }
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let xv = tape.constant(x.clone().reshape(vec![1, input])?);
        let hv = tape.constant(h.clone().reshape(vec![1, hidden])?);
        let cv = tape.constant(c.clone().reshape(vec![1, hidden])?);
        let mut cur = VarCursor::new(&vars);
        let (h1, c1) = cell(&mut tape, &mut cur, hidden, xv, hv, cv)?;
        Ok((
            tape.value(h1).clone().reshape(vec![hidden])?,
            tape.value(c1).clone().reshape(vec![hidden])?,
        ))
    }
}

impl Parameters for LstmParams {
    fn params(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("w_ih".into(), &self.w_ih),
            ("w_hh".into(), &self.w_hh),
            ("bias".into(), &self.bias),
        ]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![
            ("w_ih".into(), &mut self.w_ih),
            ("w_hh".into(), &mut self.w_hh),
            ("bias".into(), &mut self.bias),
        ]
    }
}

/// Gate equations for a batch: `x: [B, in]`, `h, c: [B, H]`. Consumes the
/// layer's three variables from `cur`.
pub(crate) fn cell(
    tape: &mut Tape,
    cur: &mut VarCursor,
    hidden: usize,
    x: Var,
    h: Var,
    c: Var,
) -> Result<(Var, Var)> {
    let (w_ih, w_hh, bias) = (cur.next()?, cur.next()?, cur.next()?);
    run_cell(tape, [w_ih, w_hh, bias], hidden, x, h, c)
}

fn run_cell(tape: &mut Tape, w: [Var; 3], hidden: usize, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
    let zx = tape.matmul(x, w[0])?;
    let zh = tape.matmul(h, w[1])?;
    let z = tape.add(zx, zh)?;
    let z = tape.add(z, w[2])?;
    let gate = |tape: &mut Tape, k: usize| tape.narrow(z, k * hidden, hidden);
    let i = gate(tape, 0)?;
    let i = tape.sigmoid(i)?;
    let f = gate(tape, 1)?;
    let f = tape.sigmoid(f)?;
    let o = gate(tape, 2)?;
    let o = tape.sigmoid(o)?;
    let g = gate(tape, 3)?;
    let g = tape.tanh(g)?;
    let keep = tape.mul(f, c)?;
    let write = tape.mul(i, g)?;
    let c1 = tape.add(keep, write)?;
    let squashed = tape.tanh(c1)?;
    let h1 = tape.mul(o, squashed)?;
    Ok((h1, c1))
}

/// Runs a stack of layers over `xs` (each `[B, in]`) from zero state and
/// returns the top layer's final hidden state.
pub(crate) fn sequence(
    tape: &mut Tape,
    cur: &mut VarCursor,
    hidden: &[usize],
    xs: &[Var],
) -> Result<Var> {
    if xs.is_empty() {
        return Err(Error::contract("lstm needs at least one timestep"));
    }
    let batch = tape.shape(xs[0])[0];
    let mut inputs = xs.to_vec();
    for &hs in hidden {
        let w = [cur.next()?, cur.next()?, cur.next()?];
        let mut h = tape.constant(Tensor::zeros(vec![batch, hs]));
        let mut c = tape.constant(Tensor::zeros(vec![batch, hs]));
        let mut outputs = Vec::with_capacity(inputs.len());
        for &x in &inputs {
            (h, c) = run_cell(tape, w, hs, x, h, c)?;
            outputs.push(h);
        }
        inputs = outputs;
    }
    Ok(*inputs.last().expect("non-empty"))
}
