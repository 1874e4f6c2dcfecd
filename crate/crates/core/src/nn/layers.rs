use numcore::{Parameters, Tape, Tensor, Var};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};

/// Tensor of the given shape with entries uniform in `±1/√fan_in`.
pub(crate) fn uniform(shape: Vec<usize>, fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    Tensor::from_fn(shape, |_| dist.sample(rng)).with_grad(true)
}

/// Walks a slice of bound variables in `params()` order.
pub(crate) struct VarCursor<'a> {
    vars: &'a [Var],
    pos: usize,
}

impl<'a> VarCursor<'a> {
    pub(crate) fn new(vars: &'a [Var]) -> Self {
        VarCursor { vars, pos: 0 }
    }

    pub(crate) fn next(&mut self) -> Result<Var> {
        let v = self.vars.get(self.pos).copied().ok_or_else(|| {
            Error::contract(format!("model expects more than {} bound parameters", self.vars.len()))
        })?;
        self.pos += 1;
        Ok(v)
    }

    pub(crate) fn finish(self) -> Result<()> {
        if self.pos != self.vars.len() {
            return Err(Error::contract(format!(
                "model consumed {} of {} bound parameters",
                self.pos,
                self.vars.len()
            )));
        }
        Ok(())
    }
}

pub(crate) fn prefixed<'a, T>(prefix: &str, items: Vec<(String, T)>) -> impl Iterator<Item = (String, T)> + 'a
where
    T: 'a,
{
    let prefix = prefix.to_string();
    items.into_iter().map(move |(n, t)| (format!("{prefix}.{n}"), t))
}

/// Affine map `x W + b` with `W: [in, out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub w: Tensor,
    pub b: Tensor,
}

impl Dense {
    pub fn init(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        Dense {
            w: uniform(vec![input, output], input, rng),
            b: uniform(vec![output], input, rng),
        }
    }

    pub fn input_size(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn output_size(&self) -> usize {
        self.w.shape()[1]
    }

    pub(crate) fn apply(tape: &mut Tape, cur: &mut VarCursor, x: Var) -> Result<Var> {
        let (w, b) = (cur.next()?, cur.next()?);
        let z = tape.matmul(x, w)?;
        Ok(tape.add(z, b)?)
    }
}

impl Parameters for Dense {
    fn params(&self) -> Vec<(String, &Tensor)> {
        vec![("w".into(), &self.w), ("b".into(), &self.b)]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![("w".into(), &mut self.w), ("b".into(), &mut self.b)]
    }
}

/// `relu((W ⊙ Â) X)` over a batch: `adj: [B, N, N]`, `x: [B, N, c]`.
pub(crate) fn graph_conv_var(tape: &mut Tape, w_gc: Var, adj: Var, x: Var) -> Result<Var> {
    let masked = tape.mul(adj, w_gc)?;
    let mixed = tape.bmm(masked, x)?;
    Ok(tape.relu(mixed)?)
}

/// `relu((W ⊙ Â) X)` for one timestep: `w_gc, adj: [N, N]`, `x: [N, c]`.
/// Entries of the mask are zero wherever `adj` is, so unlinked nodes never
/// mix.
pub fn graph_conv(w_gc: &Tensor, adj: &Tensor, x: &Tensor) -> Result<Tensor> {
    let n = match adj.shape() {
        [r, c] if r == c => *r,
        s => return Err(Error::shape("graph_conv adjacency", "[N, N]", format!("{s:?}"))),
    };
    if w_gc.shape() != adj.shape() {
        return Err(Error::shape("graph_conv filter", format!("{:?}", adj.shape()), format!("{:?}", w_gc.shape())));
    }
    if x.shape().len() != 2 || x.shape()[0] != n {
        return Err(Error::shape("graph_conv features", format!("[{n}, c]"), format!("{:?}", x.shape())));
    }
    let c = x.shape()[1];
    let mut tape = Tape::new();
    let w = tape.constant(w_gc.clone());
    let a = tape.constant(adj.clone().reshape(vec![1, n, n])?);
    let xv = tape.constant(x.clone().reshape(vec![1, n, c])?);
    let out = graph_conv_var(&mut tape, w, a, xv)?;
    Ok(tape.value(out).clone().reshape(vec![n, c])?)
}

/// For every kernel tap, the row each node reads from: the node `offset`
/// places further along its corridor, or `None` past a corridor end.
pub(crate) fn shift_indices(order: &[Vec<usize>], n: usize, k: usize) -> Vec<Vec<Option<usize>>> {
    let half = (k / 2) as isize;
    (-half..=half)
        .map(|off| {
            let mut idx = vec![None; n];
            for corridor in order {
                for (pos, &node) in corridor.iter().enumerate() {
                    let src = pos as isize + off;
                    if src >= 0 && (src as usize) < corridor.len() {
                        idx[node] = Some(corridor[src as usize]);
                    }
                }
            }
            idx
        })
        .collect()
}

pub(crate) fn check_order(order: &[Vec<usize>], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    for &i in order.iter().flatten() {
        if i >= n || seen[i] {
            return Err(Error::config(format!("node order is not a permutation of 0..{n}")));
        }
        seen[i] = true;
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::config(format!("node order is not a permutation of 0..{n}")));
    }
    Ok(())
}

/// 1-D convolution along each corridor: `x: [B, N, c]`, `kernel: [k·c, c_out]`
/// (tap-major), zero padding at corridor ends, then relu.
pub(crate) fn conv1d_var(
    tape: &mut Tape,
    x: Var,
    kernel: Var,
    shifts: &[Vec<Option<usize>>],
) -> Result<Var> {
    let (b, n) = (tape.shape(x)[0], tape.shape(x)[1]);
    let taps = shifts
        .iter()
        .map(|idx| tape.gather_rows(x, idx.clone()))
        .collect::<numcore::Result<Vec<Var>>>()?;
    let stacked = tape.concat(&taps)?;
    let width = tape.shape(stacked)[2];
    let flat = tape.reshape(stacked, vec![b * n, width])?;
    let y = tape.matmul(flat, kernel)?;
    let c_out = tape.shape(y)[1];
    let y = tape.reshape(y, vec![b, n, c_out])?;
    Ok(tape.relu(y)?)
}

/// Node-axis convolution of one timestep. `x: [N, c]`,
/// `kernel: [k, c, c_out]`, `order` lists each corridor's nodes by milepost.
pub fn conv1d_node(x: &Tensor, kernel: &Tensor, order: &[Vec<usize>]) -> Result<Tensor> {
    let [k, c, c_out] = match kernel.shape() {
        [k, c, o] => [*k, *c, *o],
        s => return Err(Error::shape("conv1d kernel", "[k, c, c_out]", format!("{s:?}"))),
    };
    if k % 2 == 0 {
        return Err(Error::config(format!("kernel size must be odd, got {k}")));
    }
    if x.shape().len() != 2 || x.shape()[1] != c {
        return Err(Error::shape("conv1d features", format!("[N, {c}]"), format!("{:?}", x.shape())));
    }
    let n = x.shape()[0];
    check_order(order, n)?;
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone().reshape(vec![1, n, c])?);
    let kv = tape.constant(kernel.clone().reshape(vec![k * c, c_out])?);
    let y = conv1d_var(&mut tape, xv, kv, &shift_indices(order, n, k))?;
    Ok(tape.value(y).clone().reshape(vec![n, c_out])?)
}
