use numcore::{Parameters, Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{conv1d_var, graph_conv_var, prefixed, shift_indices, uniform, Dense, VarCursor};
use super::lstm::{sequence, LstmParams};
use super::spec::{ModelKind, ModelSpec};
use crate::error::{Error, Result};

/// Model inputs for a batch of `B` samples, split per input timestep.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    /// `l` tensors of shape `[B, N, c]`.
    pub inputs: Vec<Tensor>,
    /// `l` tensors of shape `[B, N, c_d]`.
    pub demand: Option<Vec<Tensor>>,
    /// `l` tensors of shape `[B, N, N]`.
    pub adjacency: Option<Vec<Tensor>>,
    /// Precomputed output of a frozen pretrained block, `[B, p·N]`.
    pub pretrained: Option<Tensor>,
}

impl Batch {
    pub fn size(&self) -> usize {
        self.inputs.first().map_or(0, |t| t.shape()[0])
    }

    /// A batch of one: `x: [l, N, c]`, optional `demand: [l, N, c_d]` and
    /// `adjacency` of `l` matrices `[N, N]`.
    pub fn single(x: &Tensor, demand: Option<&Tensor>, adjacency: Option<&[Tensor]>) -> Result<Self> {
        let unstack = |t: &Tensor, what: &str| -> Result<Vec<Tensor>> {
            let s = t.shape();
            if s.len() != 3 {
                return Err(Error::shape(what, "[l, N, c]", format!("{s:?}")));
            }
            let step = s[1] * s[2];
            (0..s[0])
                .map(|k| Ok(Tensor::new(vec![1, s[1], s[2]], t.data()[k * step..(k + 1) * step].to_vec())?))
                .collect()
        };
        let adjacency = adjacency
            .map(|seq| {
                seq.iter()
                    .map(|a| {
                        let n = a.shape()[0];
                        Ok(a.clone().reshape(vec![1, n, a.shape().get(1).copied().unwrap_or(0)])?)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .transpose()?;
        Ok(Batch {
            inputs: unstack(x, "inputs")?,
            demand: demand.map(|d| unstack(d, "demand inputs")).transpose()?,
            adjacency,
            pretrained: None,
        })
    }
}

/// Graph convolution per step, LSTM over time, affine head with tanh.
/// Shared by the dynamic and static graph models.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphLstm {
    pub horizon: usize,
    pub w_gc: Tensor,
    pub lstm: LstmParams,
    pub head: Dense,
}

impl GraphLstm {
    pub fn init(spec: &ModelSpec, rng: &mut ChaCha8Rng) -> Self {
        let n = spec.nodes;
        GraphLstm {
            horizon: spec.horizon,
            w_gc: Tensor::ones(vec![n, n]).with_grad(true),
            lstm: LstmParams::init(n * spec.features, spec.hidden_size, rng),
            head: Dense::init(spec.hidden_size, n * spec.horizon, rng),
        }
    }

    pub fn nodes(&self) -> usize {
        self.w_gc.shape()[0]
    }

    /// Scaled `[B, p·N]` prediction.
    pub(crate) fn forward(&self, tape: &mut Tape, cur: &mut VarCursor, batch: &Batch) -> Result<Var> {
        let adjacency = batch
            .adjacency
            .as_ref()
            .ok_or_else(|| Error::contract("graph model needs an adjacency sequence"))?;
        if adjacency.len() != batch.inputs.len() {
            return Err(Error::contract(format!(
                "adjacency sequence has {} steps, inputs have {}",
                adjacency.len(),
                batch.inputs.len()
            )));
        }
        let w_gc = cur.next()?;
        let mut xs = Vec::with_capacity(batch.inputs.len());
        for (x, a) in batch.inputs.iter().zip(adjacency) {
            let (b, n, c) = dims3(x)?;
            let xv = tape.constant(x.clone());
            let av = tape.constant(a.clone());
            let gc = graph_conv_var(tape, w_gc, av, xv)?;
            xs.push(tape.reshape(gc, vec![b, n * c])?);
        }
        let h = sequence(tape, cur, &[self.lstm.hidden_size()], &xs)?;
        let out = Dense::apply(tape, cur, h)?;
        Ok(tape.tanh(out)?)
    }

    pub fn set_frozen(&mut self, frozen: bool) {
        for (_, t) in self.params_mut() {
            t.set_requires_grad(!frozen);
        }
    }
}

impl Parameters for GraphLstm {
    fn params(&self) -> Vec<(String, &Tensor)> {
        let mut v = vec![("w_gc".to_string(), &self.w_gc)];
        v.extend(prefixed("lstm", self.lstm.params()));
        v.extend(prefixed("head", self.head.params()));
        v
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut v = vec![("w_gc".to_string(), &mut self.w_gc)];
        v.extend(prefixed("lstm", self.lstm.params_mut()));
        v.extend(prefixed("head", self.head.params_mut()));
        v
    }
}

/// Stacked LSTM over node-flattened features.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmModel {
    pub layers: Vec<LstmParams>,
    pub head: Dense,
}

impl LstmModel {
    fn init(spec: &ModelSpec, rng: &mut ChaCha8Rng) -> Self {
        let mut input = spec.nodes * spec.features;
        let layers = (0..spec.layers)
            .map(|_| {
                let l = LstmParams::init(input, spec.hidden_size, rng);
                input = spec.hidden_size;
                l
            })
            .collect();
        LstmModel {
            layers,
            head: Dense::init(spec.hidden_size, spec.nodes * spec.horizon, rng),
        }
    }

    fn forward(&self, tape: &mut Tape, cur: &mut VarCursor, batch: &Batch) -> Result<Var> {
        let xs = flatten_steps(tape, &batch.inputs)?;
        let hidden: Vec<usize> = self.layers.iter().map(LstmParams::hidden_size).collect();
        let h = sequence(tape, cur, &hidden, &xs)?;
        let out = Dense::apply(tape, cur, h)?;
        Ok(tape.tanh(out)?)
    }
}

impl Parameters for LstmModel {
    fn params(&self) -> Vec<(String, &Tensor)> {
        let mut v: Vec<_> = self
            .layers
            .iter()
            .enumerate()
            .flat_map(|(k, l)| prefixed(&format!("lstm{k}"), l.params()))
            .collect();
        v.extend(prefixed("head", self.head.params()));
        v
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut v: Vec<_> = self
            .layers
            .iter_mut()
            .enumerate()
            .flat_map(|(k, l)| prefixed(&format!("lstm{k}"), l.params_mut()))
            .collect();
        v.extend(prefixed("head", self.head.params_mut()));
        v
    }
}

/// Corridor-wise node convolution per step feeding an LSTM.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLstm {
    /// `[k, c, c_out]`.
    pub kernel: Tensor,
    pub node_order: Vec<Vec<usize>>,
    pub lstm: LstmParams,
    pub head: Dense,
}

impl ConvLstm {
    fn init(spec: &ModelSpec, rng: &mut ChaCha8Rng) -> Self {
        let (k, c, co) = (spec.kernel_size, spec.features, spec.conv_channels);
        ConvLstm {
            kernel: uniform(vec![k, c, co], k * c, rng),
            node_order: spec.corridors(),
            lstm: LstmParams::init(spec.nodes * co, spec.hidden_size, rng),
            head: Dense::init(spec.hidden_size, spec.nodes * spec.horizon, rng),
        }
    }

    fn forward(&self, tape: &mut Tape, cur: &mut VarCursor, batch: &Batch) -> Result<Var> {
        let [k, c, co] = match self.kernel.shape() {
            [k, c, co] => [*k, *c, *co],
            s => return Err(Error::shape("conv kernel", "[k, c, c_out]", format!("{s:?}"))),
        };
        let kernel = cur.next()?;
        let kernel = tape.reshape(kernel, vec![k * c, co])?;
        let n = self.lstm.input_size() / co;
        let shifts = shift_indices(&self.node_order, n, k);
        let mut xs = Vec::with_capacity(batch.inputs.len());
        for x in &batch.inputs {
            let (b, _, _) = dims3(x)?;
            let xv = tape.constant(x.clone());
            let y = conv1d_var(tape, xv, kernel, &shifts)?;
            xs.push(tape.reshape(y, vec![b, n * co])?);
        }
        let h = sequence(tape, cur, &[self.lstm.hidden_size()], &xs)?;
        let out = Dense::apply(tape, cur, h)?;
        Ok(tape.tanh(out)?)
    }
}

impl Parameters for ConvLstm {
    fn params(&self) -> Vec<(String, &Tensor)> {
        let mut v = vec![("conv.kernel".to_string(), &self.kernel)];
        v.extend(prefixed("lstm", self.lstm.params()));
        v.extend(prefixed("head", self.head.params()));
        v
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut v = vec![("conv.kernel".to_string(), &mut self.kernel)];
        v.extend(prefixed("lstm", self.lstm.params_mut()));
        v.extend(prefixed("head", self.head.params_mut()));
        v
    }
}

/// Frozen graph block gated by evacuation-demand features, plus a demand
/// LSTM branch:
/// `out = sigmoid(W_C · x_D,last + b_C) ⊙ h' + tanh(demand_head(LSTM(x_D)))`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferModel {
    pub pretrained: Option<GraphLstm>,
    pub demand: LstmParams,
    pub demand_head: Dense,
    /// `W_C: [N·c_d, p·N]`, `b_C: [p·N]`.
    pub gate: Dense,
}

impl TransferModel {
    fn init(spec: &ModelSpec, rng: &mut ChaCha8Rng) -> Self {
        let width = spec.nodes * spec.demand_features;
        let out = spec.nodes * spec.horizon;
        TransferModel {
            pretrained: None,
            demand: LstmParams::init(width, spec.demand_hidden, rng),
            demand_head: Dense::init(spec.demand_hidden, out, rng),
            gate: Dense::init(width, out, rng),
        }
    }

    /// Installs a pretrained graph block, frozen.
    pub fn attach(&mut self, mut pretrained: GraphLstm) -> Result<()> {
        let want = self.gate.output_size();
        if pretrained.head.output_size() != want {
            return Err(Error::shape("pretrained output width", want, pretrained.head.output_size()));
        }
        pretrained.set_frozen(true);
        self.pretrained = Some(pretrained);
        Ok(())
    }

    /// Number of variables the pretrained block occupies in `params()`.
    fn pretrained_len(&self) -> usize {
        self.pretrained.as_ref().map_or(0, |p| p.params().len())
    }

    fn forward(&self, tape: &mut Tape, cur: &mut VarCursor, batch: &Batch) -> Result<Var> {
        let demand = batch
            .demand
            .as_ref()
            .ok_or_else(|| Error::contract("transfer model needs demand features"))?;
        let h_prime = match (&batch.pretrained, &self.pretrained) {
            (Some(cached), _) => {
                for _ in 0..self.pretrained_len() {
                    cur.next()?;
                }
                tape.constant(cached.clone())
            }
            (None, Some(block)) => block.forward(tape, cur, batch)?,
            (None, None) => return Err(Error::UnloadedModel),
        };
        let xs = flatten_steps(tape, demand)?;
        let h = sequence(tape, cur, &[self.demand.hidden_size()], &xs)?;
        let h_evc = Dense::apply(tape, cur, h)?;
        let last = *xs.last().expect("non-empty demand sequence");
        let gate = Dense::apply(tape, cur, last)?;
        let gate = tape.sigmoid(gate)?;
        let kept = tape.mul(gate, h_prime)?;
        let demand_term = tape.tanh(h_evc)?;
        Ok(tape.add(kept, demand_term)?)
    }
}

impl Parameters for TransferModel {
    fn params(&self) -> Vec<(String, &Tensor)> {
        let mut v: Vec<(String, &Tensor)> = Vec::new();
        if let Some(p) = &self.pretrained {
            v.extend(prefixed("pretrained", p.params()));
        }
        v.extend(prefixed("demand", self.demand.params()));
        v.extend(prefixed("demand_head", self.demand_head.params()));
        v.extend(prefixed("gate", self.gate.params()));
        v
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut v: Vec<(String, &mut Tensor)> = Vec::new();
        if let Some(p) = &mut self.pretrained {
            v.extend(prefixed("pretrained", p.params_mut()));
        }
        v.extend(prefixed("demand", self.demand.params_mut()));
        v.extend(prefixed("demand_head", self.demand_head.params_mut()));
        v.extend(prefixed("gate", self.gate.params_mut()));
        v
    }
}

// Models are built a handful at a time; boxing would only add noise.
#[allow(clippy::large_enum_variant)]
#[derive(Clone, Debug, PartialEq)]
pub enum Network {
    Lstm(LstmModel),
    ConvLstm(ConvLstm),
    /// Graph block fed a time-invariant adjacency.
    GcnLstm(GraphLstm),
    DgcnLstm(GraphLstm),
    Transfer(TransferModel),
}

/// A model architecture with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub spec: ModelSpec,
    pub net: Network,
}

/// Draws parameters for `spec` from a ChaCha8 stream seeded with `seed`.
/// Weights are uniform in `±1/√fan_in`, graph filters start at all ones and
/// forget-gate biases at 1.
pub fn init_params(spec: &ModelSpec, seed: u64) -> Result<Model> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = match spec.kind {
        ModelKind::Lstm => Network::Lstm(LstmModel::init(spec, &mut rng)),
        ModelKind::ConvLstm => Network::ConvLstm(ConvLstm::init(spec, &mut rng)),
        ModelKind::GcnLstm => Network::GcnLstm(GraphLstm::init(spec, &mut rng)),
        ModelKind::DgcnLstm => Network::DgcnLstm(GraphLstm::init(spec, &mut rng)),
        ModelKind::Transfer => Network::Transfer(TransferModel::init(spec, &mut rng)),
    };
    Ok(Model {
        spec: spec.clone(),
        net,
    })
}

impl Model {
    pub fn init(spec: &ModelSpec) -> Result<Self> {
        init_params(spec, spec.seed)
    }

    pub fn kind(&self) -> ModelKind {
        self.spec.kind
    }

    /// Scaled prediction `[B, p·N]`; entry `step·N + node`.
    pub fn forward(&self, tape: &mut Tape, vars: &[Var], batch: &Batch) -> Result<Var> {
        self.check_batch(batch)?;
        let mut cur = VarCursor::new(vars);
        let out = match &self.net {
            Network::Lstm(m) => m.forward(tape, &mut cur, batch)?,
            Network::ConvLstm(m) => m.forward(tape, &mut cur, batch)?,
            Network::GcnLstm(m) | Network::DgcnLstm(m) => m.forward(tape, &mut cur, batch)?,
            Network::Transfer(m) => m.forward(tape, &mut cur, batch)?,
        };
        cur.finish()?;
        Ok(out)
    }

    /// Forward pass without keeping the tape.
    pub fn predict(&self, batch: &Batch) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let out = self.forward(&mut tape, &vars, batch)?;
        Ok(tape.value(out).clone())
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        let s = &self.spec;
        if batch.inputs.len() != s.input_len {
            return Err(Error::contract(format!(
                "batch has {} input steps, model expects {}",
                batch.inputs.len(),
                s.input_len
            )));
        }
        let b = batch.size();
        for x in &batch.inputs {
            if x.shape() != [b, s.nodes, s.features] {
                return Err(Error::shape(
                    "input step",
                    format!("[{b}, {}, {}]", s.nodes, s.features),
                    format!("{:?}", x.shape()),
                ));
            }
        }
        if let Some(adj) = &batch.adjacency {
            for a in adj {
                if a.shape() != [b, s.nodes, s.nodes] {
                    return Err(Error::shape(
                        "adjacency step",
                        format!("[{b}, {}, {}]", s.nodes, s.nodes),
                        format!("{:?}", a.shape()),
                    ));
                }
            }
        }
        if let Some(d) = &batch.demand {
            if d.len() != s.input_len {
                return Err(Error::contract(format!(
                    "demand sequence has {} steps, model expects {}",
                    d.len(),
                    s.input_len
                )));
            }
            for x in d {
                if x.shape() != [b, s.nodes, s.demand_features] {
                    return Err(Error::shape(
                        "demand step",
                        format!("[{b}, {}, {}]", s.nodes, s.demand_features),
                        format!("{:?}", x.shape()),
                    ));
                }
            }
        }
        Ok(())
    }

    /// The graph block of a dynamic or static graph model.
    pub fn graph_block(&self) -> Option<&GraphLstm> {
        match &self.net {
            Network::GcnLstm(g) | Network::DgcnLstm(g) => Some(g),
            Network::Transfer(t) => t.pretrained.as_ref(),
            _ => None,
        }
    }

    pub fn transfer(&self) -> Option<&TransferModel> {
        match &self.net {
            Network::Transfer(t) => Some(t),
            _ => None,
        }
    }

    pub fn transfer_mut(&mut self) -> Option<&mut TransferModel> {
        match &mut self.net {
            Network::Transfer(t) => Some(t),
            _ => None,
        }
    }

    /// A transfer model whose frozen block is `pretrained`'s graph block.
    pub fn transfer_from(pretrained: &Model, spec: &ModelSpec) -> Result<Self> {
        if pretrained.kind() != ModelKind::DgcnLstm {
            return Err(Error::config(format!(
                "transfer needs a dgcnlstm pretrained model, got {}",
                pretrained.kind()
            )));
        }
        let p = &pretrained.spec;
        if (p.nodes, p.input_len, p.horizon, p.features) != (spec.nodes, spec.input_len, spec.horizon, spec.features) {
            return Err(Error::shape(
                "pretrained (N, l, p, c)",
                format!("{:?}", (spec.nodes, spec.input_len, spec.horizon, spec.features)),
                format!("{:?}", (p.nodes, p.input_len, p.horizon, p.features)),
            ));
        }
        let spec = ModelSpec {
            kind: ModelKind::Transfer,
            hidden_size: p.hidden_size,
            ..spec.clone()
        };
        let mut model = init_params(&spec, spec.seed)?;
        let block = pretrained.graph_block().expect("dgcnlstm has a graph block").clone();
        model.transfer_mut().expect("transfer kind").attach(block)?;
        Ok(model)
    }
}

impl Parameters for Model {
    fn params(&self) -> Vec<(String, &Tensor)> {
        match &self.net {
            Network::Lstm(m) => m.params(),
            Network::ConvLstm(m) => m.params(),
            Network::GcnLstm(m) | Network::DgcnLstm(m) => m.params(),
            Network::Transfer(m) => m.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        match &mut self.net {
            Network::Lstm(m) => m.params_mut(),
            Network::ConvLstm(m) => m.params_mut(),
            Network::GcnLstm(m) | Network::DgcnLstm(m) => m.params_mut(),
            Network::Transfer(m) => m.params_mut(),
        }
    }
}

fn dims3(x: &Tensor) -> Result<(usize, usize, usize)> {
    match x.shape() {
        [b, n, c] => Ok((*b, *n, *c)),
        s => Err(Error::shape("step tensor", "[B, N, c]", format!("{s:?}"))),
    }
}

fn flatten_steps(tape: &mut Tape, steps: &[Tensor]) -> Result<Vec<Var>> {
    steps
        .iter()
        .map(|x| {
            let (b, n, c) = dims3(x)?;
            let v = tape.constant(x.clone());
            Ok(tape.reshape(v, vec![b, n * c])?)
        })
        .collect()
}

fn single_output(out: Tensor, horizon: usize) -> Result<Tensor> {
    let n = out.len() / horizon;
    Ok(out.reshape(vec![horizon, n])?)
}

/// Dynamic graph model on one sample: `x: [l, N, c]` with one normalized
/// adjacency per input step. Returns the scaled `[p, N]` forecast.
pub fn dgcn_lstm_forward(block: &GraphLstm, x: &Tensor, adjacency: &[Tensor]) -> Result<Tensor> {
    if x.shape().len() != 3 || adjacency.len() != x.shape()[0] {
        return Err(Error::contract(format!(
            "adjacency sequence has {} steps, input has shape {:?}",
            adjacency.len(),
            x.shape()
        )));
    }
    let batch = Batch::single(x, None, Some(adjacency))?;
    let mut tape = Tape::new();
    let vars = block.bind(&mut tape);
    let mut cur = VarCursor::new(&vars);
    let out = block.forward(&mut tape, &mut cur, &batch)?;
    cur.finish()?;
    single_output(tape.value(out).clone(), block.horizon)
}

/// Transfer model on one sample. Returns the scaled `[p, N]` forecast.
pub fn transfer_forward(
    model: &TransferModel,
    x_evc: &Tensor,
    x_demand: &Tensor,
    adjacency: &[Tensor],
) -> Result<Tensor> {
    let horizon = model
        .pretrained
        .as_ref()
        .ok_or(Error::UnloadedModel)?
        .horizon;
    let batch = Batch::single(x_evc, Some(x_demand), Some(adjacency))?;
    let mut tape = Tape::new();
    let vars = model.bind(&mut tape);
    let mut cur = VarCursor::new(&vars);
    let out = model.forward(&mut tape, &mut cur, &batch)?;
    cur.finish()?;
    single_output(tape.value(out).clone(), horizon)
}
