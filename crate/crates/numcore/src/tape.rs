//! The computation record: an append-only list of primitive nodes.
//!
//! Node inputs always precede the node itself, so index order is a valid
//! topological order and backward is a single reverse sweep.

use crate::error::{NumError, Result};
use crate::gemm::gemm;
use crate::tensor::{numel, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Primitive operations.
///
/// `Add`, `Sub` and `Mul` accept a right operand whose shape is a trailing
/// suffix of the left operand's shape; it is repeated over the leading axes
/// (bias add, shared filter masks). `Concat` and `Narrow` act on the last
/// axis, `GatherRows` on the second-to-last.
#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Leaf,
    MatMul,
    BatchMatMul,
    Add,
    Sub,
    Mul,
    Scale(f64),
    Sigmoid,
    Tanh,
    Relu,
    Concat,
    Narrow { start: usize, len: usize },
    Reshape(Vec<usize>),
    Sum,
    Mean,
    /// Output row `i` copies input row `index[i]`, or zeros for `None`.
    GatherRows(Vec<Option<usize>>),
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul => "matmul",
            Op::BatchMatMul => "bmm",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Scale(_) => "scale",
            Op::Sigmoid => "sigmoid",
            Op::Tanh => "tanh",
            Op::Relu => "relu",
            Op::Concat => "concat",
            Op::Narrow { .. } => "narrow",
            Op::Reshape(_) => "reshape",
            Op::Sum => "sum",
            Op::Mean => "mean",
            Op::GatherRows(_) => "gather_rows",
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    inputs: Vec<Var>,
    value: Tensor,
    tracked: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn suffix_broadcast(op: &'static str, a: &[usize], b: &[usize]) -> Result<usize> {
    if b.len() > a.len() || a[a.len() - b.len()..] != *b {
        return Err(NumError::Shape {
            op,
            lhs: a.to_vec(),
            rhs: b.to_vec(),
        });
    }
    Ok(numel(b))
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> NumError {
    NumError::Shape {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

fn arity(op: &Op, got: usize) -> Result<()> {
    let ok = match op {
        Op::Leaf => got == 0,
        Op::Concat => got >= 1,
        Op::MatMul | Op::BatchMatMul | Op::Add | Op::Sub | Op::Mul => got == 2,
        _ => got == 1,
    };
    if ok {
        Ok(())
    } else {
        Err(NumError::contract(format!(
            "{} takes a different number of inputs than {got}",
            op.name()
        )))
    }
}

/// Evaluates a primitive on concrete values.
fn eval(op: &Op, xs: &[&Tensor]) -> Result<Tensor> {
    arity(op, xs.len())?;
    let name = op.name();
    for x in xs {
        if !x.is_finite() {
            return Err(NumError::NonFinite { op: name });
        }
    }
    let map = |a: &Tensor, f: fn(f64) -> f64| {
        Tensor::new(a.shape().to_vec(), a.data().iter().map(|&v| f(v)).collect())
    };
    match op {
        Op::Leaf => Err(NumError::contract("leaf nodes are not evaluated")),
        Op::MatMul => {
            let (a, b) = (xs[0], xs[1]);
            let (sa, sb) = (a.shape(), b.shape());
            if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
                return Err(shape_err(name, a, b));
            }
            let (m, k, n) = (sa[0], sa[1], sb[1]);
            let mut out = vec![0.0; m * n];
            gemm(m, k, n, a.data(), false, b.data(), false, &mut out, false);
            Tensor::new(vec![m, n], out)
        }
        Op::BatchMatMul => {
            let (a, b) = (xs[0], xs[1]);
            let (sa, sb) = (a.shape(), b.shape());
            if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
                return Err(shape_err(name, a, b));
            }
            let (bs, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
            let mut out = vec![0.0; bs * m * n];
            for i in 0..bs {
                gemm(
                    m,
                    k,
                    n,
                    &a.data()[i * m * k..(i + 1) * m * k],
                    false,
                    &b.data()[i * k * n..(i + 1) * k * n],
                    false,
                    &mut out[i * m * n..(i + 1) * m * n],
                    false,
                );
            }
            Tensor::new(vec![bs, m, n], out)
        }
        Op::Add | Op::Sub | Op::Mul => {
            let (a, b) = (xs[0], xs[1]);
            let inner = suffix_broadcast(name, a.shape(), b.shape())?;
            let bd = b.data();
            let out: Vec<f64> = a
                .data()
                .chunks(inner)
                .flat_map(|chunk| {
                    chunk.iter().zip(bd).map(|(&x, &y)| match op {
                        Op::Add => x + y,
                        Op::Sub => x - y,
                        _ => x * y,
                    })
                })
                .collect();
            Tensor::new(a.shape().to_vec(), out)
        }
        Op::Scale(s) => {
            let s = *s;
            if !s.is_finite() {
                return Err(NumError::NonFinite { op: name });
            }
            let a = xs[0];
            Tensor::new(a.shape().to_vec(), a.data().iter().map(|v| v * s).collect())
        }
        Op::Sigmoid => map(xs[0], sigmoid),
        Op::Tanh => map(xs[0], f64::tanh),
        Op::Relu => map(xs[0], |v| if v > 0.0 { v } else { 0.0 }),
        Op::Concat => {
            let first = xs[0].shape();
            if first.is_empty() {
                return Err(NumError::contract("concat needs rank >= 1"));
            }
            let lead = &first[..first.len() - 1];
            let mut widths = Vec::with_capacity(xs.len());
            for x in xs {
                let s = x.shape();
                if s.len() != first.len() || s[..s.len() - 1] != *lead {
                    return Err(shape_err(name, xs[0], x));
                }
                widths.push(s[s.len() - 1]);
            }
            let total: usize = widths.iter().sum();
            let rows = numel(lead);
            let mut out = Vec::with_capacity(rows * total);
            for r in 0..rows {
                for (x, &w) in xs.iter().zip(&widths) {
                    out.extend_from_slice(&x.data()[r * w..(r + 1) * w]);
                }
            }
            let mut shape = lead.to_vec();
            shape.push(total);
            Tensor::new(shape, out)
        }
        Op::Narrow { start, len } => {
            let a = xs[0];
            let s = a.shape();
            let last = *s
                .last()
                .ok_or_else(|| NumError::contract("narrow needs rank >= 1"))?;
            if *len == 0 || start + len > last {
                return Err(NumError::contract(format!(
                    "narrow [{start}, {}) outside last axis of extent {last}",
                    start + len
                )));
            }
            let out: Vec<f64> = a
                .data()
                .chunks(last)
                .flat_map(|row| row[*start..start + len].iter().copied())
                .collect();
            let mut shape = s.to_vec();
            *shape.last_mut().unwrap() = *len;
            Tensor::new(shape, out)
        }
        Op::Reshape(shape) => xs[0].clone().with_grad(false).reshape(shape.clone()),
        Op::Sum => Ok(Tensor::scalar(xs[0].data().iter().sum())),
        Op::Mean => {
            let a = xs[0];
            Ok(Tensor::scalar(a.data().iter().sum::<f64>() / a.len() as f64))
        }
        Op::GatherRows(index) => {
            let a = xs[0];
            let s = a.shape();
            if s.len() < 2 {
                return Err(NumError::contract("gather_rows needs rank >= 2"));
            }
            let (rows, cols) = (s[s.len() - 2], s[s.len() - 1]);
            if index.is_empty() || index.iter().flatten().any(|&r| r >= rows) {
                return Err(NumError::contract(format!(
                    "gather_rows index out of range for {rows} rows"
                )));
            }
            let batches = numel(&s[..s.len() - 2]);
            let mut out = vec![0.0; batches * index.len() * cols];
            for bi in 0..batches {
                let src = &a.data()[bi * rows * cols..(bi + 1) * rows * cols];
                let dst = &mut out[bi * index.len() * cols..(bi + 1) * index.len() * cols];
                for (i, r) in index.iter().enumerate() {
                    if let Some(r) = r {
                        dst[i * cols..(i + 1) * cols]
                            .copy_from_slice(&src[r * cols..(r + 1) * cols]);
                    }
                }
            }
            let mut shape = s.to_vec();
            let at = shape.len() - 2;
            shape[at] = index.len();
            Tensor::new(shape, out)
        }
    }
}

/// Sums a full-size gradient over the leading repetitions of a broadcast
/// operand of `inner` elements.
fn reduce_leading(full: impl Iterator<Item = f64>, inner: usize) -> Vec<f64> {
    let mut out = vec![0.0; inner];
    for (i, v) in full.enumerate() {
        out[i % inner] += v;
    }
    out
}

/// Vector-Jacobian products of a primitive. Returns one entry per input;
/// `None` where the input does not need a gradient.
fn vjp(op: &Op, xs: &[&Tensor], y: &Tensor, gy: &[f64], need: &[bool]) -> Vec<Option<Vec<f64>>> {
    let mut out: Vec<Option<Vec<f64>>> = vec![None; xs.len()];
    match op {
        Op::Leaf => {}
        Op::MatMul => {
            let (a, b) = (xs[0], xs[1]);
            let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
            if need[0] {
                let mut ga = vec![0.0; m * k];
                gemm(m, n, k, gy, false, b.data(), true, &mut ga, false);
                out[0] = Some(ga);
            }
            if need[1] {
                let mut gb = vec![0.0; k * n];
                gemm(k, m, n, a.data(), true, gy, false, &mut gb, false);
                out[1] = Some(gb);
            }
        }
        Op::BatchMatMul => {
            let (a, b) = (xs[0], xs[1]);
            let (bs, m, k, n) = (a.shape()[0], a.shape()[1], a.shape()[2], b.shape()[2]);
            if need[0] {
                let mut ga = vec![0.0; bs * m * k];
                for i in 0..bs {
                    gemm(
                        m,
                        n,
                        k,
                        &gy[i * m * n..(i + 1) * m * n],
                        false,
                        &b.data()[i * k * n..(i + 1) * k * n],
                        true,
                        &mut ga[i * m * k..(i + 1) * m * k],
                        false,
                    );
                }
                out[0] = Some(ga);
            }
            if need[1] {
                let mut gb = vec![0.0; bs * k * n];
                for i in 0..bs {
                    gemm(
                        k,
                        m,
                        n,
                        &a.data()[i * m * k..(i + 1) * m * k],
                        true,
                        &gy[i * m * n..(i + 1) * m * n],
                        false,
                        &mut gb[i * k * n..(i + 1) * k * n],
                        false,
                    );
                }
                out[1] = Some(gb);
            }
        }
        Op::Add | Op::Sub => {
            let inner = xs[1].len();
            if need[0] {
                out[0] = Some(gy.to_vec());
            }
            if need[1] {
                let sign = if matches!(op, Op::Sub) { -1.0 } else { 1.0 };
                out[1] = Some(reduce_leading(gy.iter().map(|g| sign * g), inner));
            }
        }
        Op::Mul => {
            let (a, b) = (xs[0], xs[1]);
            let inner = b.len();
            if need[0] {
                let bd = b.data();
                out[0] = Some(
                    gy.iter()
                        .enumerate()
                        .map(|(i, g)| g * bd[i % inner])
                        .collect(),
                );
            }
            if need[1] {
                out[1] = Some(reduce_leading(
                    gy.iter().zip(a.data()).map(|(g, x)| g * x),
                    inner,
                ));
            }
        }
        Op::Scale(s) => {
            out[0] = Some(gy.iter().map(|g| g * s).collect());
        }
        Op::Sigmoid => {
            out[0] = Some(
                gy.iter()
                    .zip(y.data())
                    .map(|(g, s)| g * s * (1.0 - s))
                    .collect(),
            );
        }
        Op::Tanh => {
            out[0] = Some(
                gy.iter()
                    .zip(y.data())
                    .map(|(g, t)| g * (1.0 - t * t))
                    .collect(),
            );
        }
        Op::Relu => {
            out[0] = Some(
                gy.iter()
                    .zip(xs[0].data())
                    .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                    .collect(),
            );
        }
        Op::Concat => {
            let widths: Vec<usize> = xs.iter().map(|x| *x.shape().last().unwrap()).collect();
            let total: usize = widths.iter().sum();
            let rows = gy.len() / total;
            let mut offset = 0;
            for (j, &w) in widths.iter().enumerate() {
                if need[j] {
                    let mut g = Vec::with_capacity(rows * w);
                    for r in 0..rows {
                        g.extend_from_slice(&gy[r * total + offset..r * total + offset + w]);
                    }
                    out[j] = Some(g);
                }
                offset += w;
            }
        }
        Op::Narrow { start, len } => {
            let last = *xs[0].shape().last().unwrap();
            let mut g = vec![0.0; xs[0].len()];
            for (r, chunk) in gy.chunks(*len).enumerate() {
                g[r * last + start..r * last + start + len].copy_from_slice(chunk);
            }
            out[0] = Some(g);
        }
        Op::Reshape(_) => out[0] = Some(gy.to_vec()),
        Op::Sum => out[0] = Some(vec![gy[0]; xs[0].len()]),
        Op::Mean => out[0] = Some(vec![gy[0] / xs[0].len() as f64; xs[0].len()]),
        Op::GatherRows(index) => {
            let s = xs[0].shape();
            let (rows, cols) = (s[s.len() - 2], s[s.len() - 1]);
            let batches = xs[0].len() / (rows * cols);
            let mut g = vec![0.0; xs[0].len()];
            for bi in 0..batches {
                for (i, r) in index.iter().enumerate() {
                    if let Some(r) = r {
                        let src = (bi * index.len() + i) * cols;
                        let dst = (bi * rows + r) * cols;
                        for c in 0..cols {
                            g[dst + c] += gy[src + c];
                        }
                    }
                }
            }
            out[0] = Some(g);
        }
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a copy of `t`; tracked iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        let tracked = t.requires_grad();
        let value = Tensor::new(t.shape().to_vec(), t.data().to_vec()).expect("valid tensor");
        self.push(Op::Leaf, Vec::new(), value, tracked)
    }

    /// Records an untracked value.
    pub fn constant(&mut self, t: Tensor) -> Var {
        let t = t.with_grad(false);
        self.push(Op::Leaf, Vec::new(), t, false)
    }

    fn push(&mut self, op: Op, inputs: Vec<Var>, value: Tensor, tracked: bool) -> Var {
        self.nodes.push(Node {
            op,
            inputs,
            value,
            tracked,
        });
        Var(self.nodes.len() - 1)
    }

    /// Applies a primitive to recorded inputs and records the result.
    pub fn apply(&mut self, op: Op, inputs: &[Var]) -> Result<Var> {
        if let Some(bad) = inputs.iter().find(|v| v.0 >= self.nodes.len()) {
            return Err(NumError::contract(format!(
                "variable {} is not on this tape",
                bad.0
            )));
        }
        let value = {
            let xs: Vec<&Tensor> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            eval(&op, &xs)?
        };
        let tracked = inputs.iter().any(|v| self.nodes[v.0].tracked);
        Ok(self.push(op, inputs.to_vec(), value, tracked))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn is_tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    pub fn op(&self, v: Var) -> &Op {
        &self.nodes[v.0].op
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Op::MatMul, &[a, b])
    }

    pub fn bmm(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Op::BatchMatMul, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Op::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Op::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Op::Mul, &[a, b])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        self.apply(Op::Scale(s), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.apply(Op::Sigmoid, &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.apply(Op::Tanh, &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.apply(Op::Relu, &[a])
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        self.apply(Op::Concat, parts)
    }

    pub fn narrow(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        self.apply(Op::Narrow { start, len }, &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        self.apply(Op::Reshape(shape.into()), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.apply(Op::Sum, &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.apply(Op::Mean, &[a])
    }

    pub fn gather_rows(&mut self, a: Var, index: Vec<Option<usize>>) -> Result<Var> {
        self.apply(Op::GatherRows(index), &[a])
    }

    /// Back-propagates from a scalar root. Gradients of previous calls are
    /// discarded; tracked leaves unreachable from `root` receive zeros.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let node = self
            .nodes
            .get(root.0)
            .ok_or_else(|| NumError::contract("root is not on this tape"))?;
        if node.value.len() != 1 {
            return Err(NumError::contract(format!(
                "backward needs a scalar root, got shape {:?}",
                node.value.shape()
            )));
        }
        if !node.tracked {
            return Err(NumError::EmptyRecord);
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.tracked || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(gy) = grads[i].take() else { continue };
            let xs: Vec<&Tensor> = node.inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            let need: Vec<bool> = node.inputs.iter().map(|v| self.nodes[v.0].tracked).collect();
            let gxs = vjp(&node.op, &xs, &node.value, &gy, &need);
            for (v, gx) in node.inputs.iter().zip(gxs) {
                let Some(gx) = gx else { continue };
                match grads[v.0].as_mut() {
                    Some(acc) => acc.iter_mut().zip(&gx).for_each(|(a, g)| *a += g),
                    None => grads[v.0] = Some(gx),
                }
            }
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.tracked && matches!(node.op, Op::Leaf) && grads[i].is_none() {
                grads[i] = Some(vec![0.0; node.value.len()]);
            }
        }
        self.grads = grads;
        Ok(())
    }

    /// Gradient of the last backward root with respect to a tracked leaf.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Re-evaluates every non-leaf node from its recorded inputs and reports
    /// whether all values reproduce bit-exactly.
    pub fn replay(&self) -> Result<bool> {
        for node in &self.nodes {
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let xs: Vec<&Tensor> = node.inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            let again = eval(&node.op, &xs)?;
            let same = again.shape() == node.value.shape()
                && again
                    .data()
                    .iter()
                    .zip(node.value.data())
                    .all(|(a, b)| a.to_bits() == b.to_bits());
            if !same {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let i = tape.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let c = tape.matmul(a, i).unwrap();
        assert_eq!(tape.value(c).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn activations_at_reference_points() {
        let mut tape = Tape::new();
        let z = tape.constant(Tensor::scalar(0.0));
        let s = tape.sigmoid(z).unwrap();
        assert_eq!(tape.value(s).data(), &[0.5]);
        let x = tape.constant(t(&[3], &[-1.5, 0.0, 2.25]));
        let r = tape.relu(x).unwrap();
        assert_eq!(tape.value(r).data(), &[0.0, 0.0, 2.25]);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(vec![2, 3]));
        let b = tape.constant(Tensor::zeros(vec![2, 3]));
        let err = tape.matmul(a, b).unwrap_err();
        assert_eq!(
            err,
            NumError::Shape {
                op: "matmul",
                lhs: vec![2, 3],
                rhs: vec![2, 3]
            }
        );
        assert!(err.to_string().contains("[2, 3]"));
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[2], &[1.0, f64::NAN]));
        assert_eq!(
            tape.tanh(a).unwrap_err(),
            NumError::NonFinite { op: "tanh" }
        );
    }

    #[test]
    fn square_gradient() {
        let mut tape = Tape::new();
        let w = tape.leaf(&Tensor::new(vec![1], vec![3.0]).unwrap().with_grad(true));
        let sq = tape.mul(w, w).unwrap();
        let loss = tape.sum(sq).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(w).unwrap(), &[6.0]);
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::new();
        let w = tape.leaf(&Tensor::from_fn(vec![2, 3, 2], |i| i as f64).with_grad(true));
        let loss = tape.sum(w).unwrap();
        tape.backward(loss).unwrap();
        assert!(tape.grad(w).unwrap().iter().all(|&g| g == 1.0));
    }

    #[test]
    fn sigmoid_gradient_at_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::scalar(0.0).with_grad(true));
        let s = tape.sigmoid(x).unwrap();
        let loss = tape.scale(s, 1.0).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[0.25]);
    }

    #[test]
    fn backward_contract_errors() {
        let mut tape = Tape::new();
        let c = tape.constant(Tensor::scalar(1.0));
        assert_eq!(tape.backward(c).unwrap_err(), NumError::EmptyRecord);
        let w = tape.leaf(&Tensor::zeros(vec![2]).with_grad(true));
        let y = tape.tanh(w).unwrap();
        assert!(matches!(tape.backward(y), Err(NumError::Contract(_))));
    }

    #[test]
    fn broadcast_bias_gradient_sums_rows() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_fn(vec![3, 2], |i| i as f64));
        let b = tape.leaf(&Tensor::zeros(vec![2]).with_grad(true));
        let y = tape.add(x, b).unwrap();
        let loss = tape.sum(y).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(b).unwrap(), &[3.0, 3.0]);
    }

    #[test]
    fn gather_rows_zero_pads() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_fn(vec![1, 3, 2], |i| i as f64 + 1.0));
        let g = tape.gather_rows(x, vec![None, Some(0), Some(1)]).unwrap();
        assert_eq!(tape.value(g).data(), &[0.0, 0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn replay_reproduces_record() {
        let mut tape = Tape::new();
        let a = tape.leaf(&Tensor::from_fn(vec![3, 4], |i| (i as f64).cos()).with_grad(true));
        let b = tape.constant(Tensor::from_fn(vec![4, 2], |i| (i as f64).sin()));
        let c = tape.matmul(a, b).unwrap();
        let d = tape.tanh(c).unwrap();
        let _ = tape.mean(d).unwrap();
        assert!(tape.replay().unwrap());
    }
}
