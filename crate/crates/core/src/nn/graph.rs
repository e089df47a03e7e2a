//! A small directed acyclic graph of layers with a forward/backward executor.
//!
//! Nodes are stored in topological order (a node may only consume earlier
//! nodes), so the forward pass is a single sweep and the backward pass the
//! reverse sweep. Per-sample shapes are resolved when the graph is built.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::nn::layers::{
    apply_mask, check_dropout_rate, conv2d_backward_with, conv2d_forward, dense_backward,
    dense_forward, maxpool_backward, maxpool_forward, relu_backward, relu_forward,
    same_padding, softmax_cross_entropy, ConvParams, DenseParams, DropoutMask, PoolIndex,
};
use crate::tensor::{concat, split_concat, Axis, Rng, Scalar, Shape, Tensor, INIT_STDDEV};

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Input,
    SliceFeature { lo: usize, hi: usize },
    Conv { layer: usize },
    Relu,
    Dropout { rate: f64 },
    MaxPool { window: (usize, usize), stride: (usize, usize) },
    Concat { axis: Axis },
    /// Flattens and concatenates all inputs in order, then applies `W·x + b`.
    Dense { layer: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub name: String,
    pub op: Op,
    pub inputs: Vec<NodeId>,
    /// Per-sample shape (batch dimension fixed at 1).
    pub shape: Shape,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub name: String,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub in_channels: usize,
    pub out_channels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub name: String,
    pub in_features: usize,
    pub out_features: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    nodes: Vec<Node>,
    convs: Vec<ConvLayer>,
    denses: Vec<DenseLayer>,
    requires_grad: Vec<bool>,
    output: NodeId,
}

#[derive(Debug, Default)]
pub struct GraphBuilder {
    nodes: Vec<Node>,
    convs: Vec<ConvLayer>,
    denses: Vec<DenseLayer>,
    names: HashSet<String>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, name: impl Into<String>, op: Op, inputs: Vec<NodeId>, shape: Shape) -> Result<NodeId> {
        let name = name.into();
        if !self.names.insert(name.clone()) {
            return Err(Error::InconsistentSpec(format!("duplicate layer name `{name}`")));
        }
        shape.validate()?;
        self.nodes.push(Node { name, op, inputs, shape });
        Ok(self.nodes.len() - 1)
    }

    fn shape_of(&self, id: NodeId) -> Result<Shape> {
        self.nodes
            .get(id)
            .map(|n| n.shape)
            .ok_or_else(|| Error::InconsistentSpec(format!("node {id} does not exist")))
    }

    fn spatial(&self, id: NodeId, what: &str) -> Result<Shape> {
        let node = self
            .nodes
            .get(id)
            .ok_or_else(|| Error::InconsistentSpec(format!("node {id} does not exist")))?;
        if matches!(node.op, Op::Dense { .. }) {
            return Err(Error::InconsistentSpec(format!("{what} cannot consume dense output `{}`", node.name)));
        }
        Ok(node.shape)
    }

    pub fn node_shape(&self, id: NodeId) -> Option<Shape> {
        self.nodes.get(id).map(|n| n.shape)
    }

    pub fn input(&mut self, time: usize, feature: usize, channels: usize) -> Result<NodeId> {
        if self.nodes.iter().any(|n| n.op == Op::Input) {
            return Err(Error::InconsistentSpec("graph already has an input".into()));
        }
        self.push("input", Op::Input, vec![], Shape::new(1, time, feature, channels))
    }

    pub fn slice_feature(&mut self, name: &str, x: NodeId, lo: usize, hi: usize) -> Result<NodeId> {
        let s = self.spatial(x, "slice")?;
        if lo >= hi || hi > s.f {
            return Err(Error::OutOfRange { lo, hi, dim: s.f });
        }
        self.push(name, Op::SliceFeature { lo, hi }, vec![x], Shape { f: hi - lo, ..s })
    }

    pub fn conv(
        &mut self,
        name: &str,
        x: NodeId,
        kernel: (usize, usize),
        stride: (usize, usize),
        out_channels: usize,
    ) -> Result<NodeId> {
        let s = self.spatial(x, "conv")?;
        if kernel.0 == 0 || kernel.1 == 0 || stride.0 == 0 || stride.1 == 0 || out_channels == 0 {
            return Err(Error::InvalidParameter(format!(
                "conv `{name}`: kernel {kernel:?}, stride {stride:?} and {out_channels} channels must be positive"
            )));
        }
        let (ot, _) = same_padding(s.t, kernel.0, stride.0);
        let (of, _) = same_padding(s.f, kernel.1, stride.1);
        self.convs.push(ConvLayer {
            name: name.to_string(),
            kernel,
            stride,
            in_channels: s.c,
            out_channels,
        });
        let layer = self.convs.len() - 1;
        self.push(name, Op::Conv { layer }, vec![x], Shape::new(1, ot, of, out_channels))
    }

    pub fn relu(&mut self, name: &str, x: NodeId) -> Result<NodeId> {
        let s = self.spatial(x, "relu")?;
        self.push(name, Op::Relu, vec![x], s)
    }

    pub fn dropout(&mut self, name: &str, x: NodeId, rate: f64) -> Result<NodeId> {
        check_dropout_rate(rate)?;
        let s = self.spatial(x, "dropout")?;
        self.push(name, Op::Dropout { rate }, vec![x], s)
    }

    pub fn maxpool(&mut self, name: &str, x: NodeId, window: (usize, usize), stride: (usize, usize)) -> Result<NodeId> {
        let s = self.spatial(x, "maxpool")?;
        if window.0 == 0 || window.1 == 0 || stride.0 == 0 || stride.1 == 0 {
            return Err(Error::InvalidParameter(format!("maxpool `{name}`: window and stride must be positive")));
        }
        let (ot, _) = same_padding(s.t, window.0, stride.0);
        let (of, _) = same_padding(s.f, window.1, stride.1);
        self.push(name, Op::MaxPool { window, stride }, vec![x], Shape { t: ot, f: of, ..s })
    }

    pub fn concat(&mut self, name: &str, xs: &[NodeId], axis: Axis) -> Result<NodeId> {
        let first = self.spatial(*xs.first().ok_or(Error::EmptyConcat)?, "concat")?;
        let mut out = first;
        for (i, &x) in xs.iter().enumerate() {
            let s = self.spatial(x, "concat")?;
            let ok = match axis {
                Axis::Feature => (s.t, s.c) == (first.t, first.c),
                Axis::Channel => (s.t, s.f) == (first.t, first.f),
            };
            if !ok {
                return Err(Error::ShapeMismatch(format!(
                    "concat `{name}` along {axis:?}: input `{}` has (t, f, c) = ({}, {}, {}) but the first has ({}, {}, {})",
                    self.nodes[x].name, s.t, s.f, s.c, first.t, first.f, first.c
                )));
            }
            if i > 0 {
                match axis {
                    Axis::Feature => out.f += s.f,
                    Axis::Channel => out.c += s.c,
                }
            }
        }
        self.push(name, Op::Concat { axis }, xs.to_vec(), out)
    }

    pub fn dense(&mut self, name: &str, xs: &[NodeId], out_features: usize) -> Result<NodeId> {
        if xs.is_empty() {
            return Err(Error::EmptyConcat);
        }
        if out_features == 0 {
            return Err(Error::InvalidParameter("dense layer needs at least one output".into()));
        }
        let mut in_features = 0;
        for &x in xs {
            in_features += self.shape_of(x)?.sample_len();
        }
        self.denses.push(DenseLayer {
            name: name.to_string(),
            in_features,
            out_features,
        });
        let layer = self.denses.len() - 1;
        self.push(name, Op::Dense { layer }, xs.to_vec(), Shape::new(1, 1, 1, out_features))
    }

    pub fn finish(self, output: NodeId) -> Result<Graph> {
        if !self.nodes.iter().any(|n| n.op == Op::Input) {
            return Err(Error::InconsistentSpec("graph has no input".into()));
        }
        if output >= self.nodes.len() {
            return Err(Error::InconsistentSpec(format!("output node {output} does not exist")));
        }
        let mut requires_grad = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let rg = match node.op {
                Op::Input => false,
                Op::Conv { .. } | Op::Dense { .. } => true,
                _ => node.inputs.iter().any(|&i| requires_grad[i]),
            };
            requires_grad.push(rg);
        }
        Ok(Graph {
            nodes: self.nodes,
            convs: self.convs,
            denses: self.denses,
            requires_grad,
            output,
        })
    }
}

/// How dropout layers behave during a forward pass.
pub enum Mode<'a, T: Scalar> {
    /// Dropout is the identity.
    Eval,
    /// Fresh masks are drawn from the generator.
    Train(&'a mut Rng),
    /// Reuses masks recorded by an earlier pass, in dropout-node order.
    Frozen(&'a [DropoutMask<T>]),
}

/// Trainable parameters of a [`Graph`], one entry per conv and dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T = f32> {
    pub convs: Vec<ConvParams<T>>,
    pub denses: Vec<DenseParams<T>>,
}

impl<T: Scalar> Params<T> {
    /// Truncated-normal weights (stddev 0.01) and zero biases.
    pub fn init(graph: &Graph, rng: &mut Rng) -> Result<Self> {
        Self::init_with(graph, INIT_STDDEV, rng)
    }

    pub fn init_with(graph: &Graph, stddev: f64, rng: &mut Rng) -> Result<Self> {
        let convs = graph
            .convs
            .iter()
            .map(|l| {
                let w = Tensor::truncated_normal((l.kernel.0, l.kernel.1, l.in_channels, l.out_channels), stddev, rng)?;
                ConvParams::new(l.kernel, l.stride, w, vec![T::zero(); l.out_channels])
            })
            .collect::<Result<_>>()?;
        let denses = graph
            .denses
            .iter()
            .map(|l| {
                let w = Tensor::<T>::truncated_normal((1, 1, l.out_features, l.in_features), stddev, rng)?;
                DenseParams::new(l.in_features, l.out_features, w.into_data(), vec![T::zero(); l.out_features])
            })
            .collect::<Result<_>>()?;
        Ok(Self { convs, denses })
    }

    pub fn zeros(graph: &Graph) -> Result<Self> {
        let convs = graph
            .convs
            .iter()
            .map(|l| {
                let w = Tensor::zeros((l.kernel.0, l.kernel.1, l.in_channels, l.out_channels))?;
                ConvParams::new(l.kernel, l.stride, w, vec![T::zero(); l.out_channels])
            })
            .collect::<Result<_>>()?;
        let denses = graph
            .denses
            .iter()
            .map(|l| {
                DenseParams::new(
                    l.in_features,
                    l.out_features,
                    vec![T::zero(); l.in_features * l.out_features],
                    vec![T::zero(); l.out_features],
                )
            })
            .collect::<Result<_>>()?;
        Ok(Self { convs, denses })
    }

    /// Checks that every tensor has the shape `graph` expects.
    pub fn check(&self, graph: &Graph) -> Result<()> {
        let want = Params::<T>::zeros(graph)?;
        let same = self.convs.len() == want.convs.len()
            && self.denses.len() == want.denses.len()
            && self.convs.iter().zip(&want.convs).all(|(a, b)| {
                a.kernel == b.kernel && a.stride == b.stride && a.weights.shape() == b.weights.shape() && a.bias.len() == b.bias.len()
            })
            && self
                .denses
                .iter()
                .zip(&want.denses)
                .all(|(a, b)| a.in_features == b.in_features && a.out_features == b.out_features);
        if !same {
            return Err(Error::ShapeMismatch("parameters do not match the graph".into()));
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    /// All parameter buffers: per conv weights then bias, then per dense weights then bias.
    pub fn slices(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for c in &self.convs {
            out.push(c.weights.data());
            out.push(&c.bias);
        }
        for d in &self.denses {
            out.push(&d.weights);
            out.push(&d.bias);
        }
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for c in &mut self.convs {
            out.push(c.weights.data_mut());
            out.push(&mut c.bias);
        }
        for d in &mut self.denses {
            out.push(&mut d.weights);
            out.push(&mut d.bias);
        }
        out
    }

    /// Buffer names matching [`Params::slices`] order, e.g. `band1/conv1.weights`.
    pub fn slice_names(graph: &Graph) -> Vec<String> {
        let mut out = Vec::new();
        for l in &graph.convs {
            out.push(format!("{}.weights", l.name));
            out.push(format!("{}.bias", l.name));
        }
        for l in &graph.denses {
            out.push(format!("{}.weights", l.name));
            out.push(format!("{}.bias", l.name));
        }
        out
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        let cv = |v: &[T]| v.iter().map(|x| U::of(x.as_f64())).collect::<Vec<U>>();
        Params {
            convs: self
                .convs
                .iter()
                .map(|c| ConvParams {
                    kernel: c.kernel,
                    stride: c.stride,
                    padding: c.padding,
                    weights: c.weights.cast(),
                    bias: cv(&c.bias),
                })
                .collect(),
            denses: self
                .denses
                .iter()
                .map(|d| DenseParams {
                    in_features: d.in_features,
                    out_features: d.out_features,
                    weights: cv(&d.weights),
                    bias: cv(&d.bias),
                })
                .collect(),
        }
    }
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct Trace<T: Scalar = f32> {
    values: Vec<Tensor<T>>,
    pools: Vec<Option<PoolIndex>>,
    masks: Vec<DropoutMask<T>>,
    mask_of: Vec<Option<usize>>,
    output: NodeId,
}

impl<T: Scalar> Trace<T> {
    pub fn batch(&self) -> usize {
        self.values[self.output].shape().n
    }

    /// Row-major `n × classes` logits.
    pub fn logits(&self) -> &[T] {
        self.values[self.output].data()
    }

    pub fn value(&self, node: NodeId) -> &Tensor<T> {
        &self.values[node]
    }

    /// Dropout masks in node order, suitable for [`Mode::Frozen`].
    pub fn masks(&self) -> &[DropoutMask<T>] {
        &self.masks
    }

    /// Hash of every ReLU sign and max-pool winner; equal hashes mean the
    /// piecewise-linear parts of the network took the same branches.
    pub fn activation_pattern(&self, graph: &Graph) -> u64 {
        let mut h = Fnv::default();
        for (id, node) in graph.nodes.iter().enumerate() {
            match node.op {
                Op::Relu => {
                    for v in self.values[node.inputs[0]].data() {
                        h.write(u64::from(*v > T::zero()));
                    }
                }
                Op::MaxPool { .. } => {
                    for &i in &self.pools[id].as_ref().expect("pool index").argmax {
                        h.write(i as u64);
                    }
                }
                _ => {}
            }
        }
        h.0
    }
}

struct Fnv(u64);

impl Default for Fnv {
    fn default() -> Self {
        Self(0xcbf2_9ce4_8422_2325)
    }
}

impl Fnv {
    fn write(&mut self, v: u64) {
        for b in v.to_le_bytes() {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }
}

/// Mean cross-entropy over a batch with its gradients.
#[derive(Debug, Clone)]
pub struct LossGrads<T: Scalar = f32> {
    pub loss: T,
    pub grads: Params<T>,
    pub trace: Trace<T>,
}

fn flatten_inputs<T: Scalar>(values: &[Tensor<T>], inputs: &[NodeId], n: usize) -> Vec<T> {
    let per: usize = inputs.iter().map(|&i| values[i].shape().sample_len()).sum();
    let mut x = Vec::with_capacity(n * per);
    for s in 0..n {
        for &i in inputs {
            x.extend_from_slice(values[i].sample(s));
        }
    }
    x
}

fn accumulate<T: Scalar>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) {
    match slot {
        Some(acc) => {
            for (a, v) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += *v;
            }
        }
        None => *slot = Some(g),
    }
}

impl Graph {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn conv_layers(&self) -> &[ConvLayer] {
        &self.convs
    }

    pub fn dense_layers(&self) -> &[DenseLayer] {
        &self.denses
    }

    pub fn output(&self) -> NodeId {
        self.output
    }

    pub fn input_shape(&self) -> Shape {
        self.nodes.iter().find(|n| n.op == Op::Input).expect("graph has an input").shape
    }

    pub fn num_classes(&self) -> usize {
        self.nodes[self.output].shape.sample_len()
    }

    pub fn node(&self, name: &str) -> Result<(NodeId, &Node)> {
        self.nodes
            .iter()
            .enumerate()
            .find(|(_, n)| n.name == name)
            .ok_or_else(|| Error::UnknownLayer(name.to_string()))
    }

    pub fn forward<T: Scalar>(&self, params: &Params<T>, x: &Tensor<T>, mut mode: Mode<'_, T>) -> Result<Trace<T>> {
        params.check(self)?;
        let xs = x.shape();
        let want = self.input_shape();
        if (xs.t, xs.f, xs.c) != (want.t, want.f, want.c) {
            return Err(Error::ShapeMismatch(format!(
                "model expects input (n, {}, {}, {}), got {:?}",
                want.t,
                want.f,
                want.c,
                xs.dims()
            )));
        }
        let n = xs.n;
        let mut values: Vec<Tensor<T>> = Vec::with_capacity(self.nodes.len());
        let mut pools = vec![None; self.nodes.len()];
        let mut masks = Vec::new();
        let mut mask_of = vec![None; self.nodes.len()];
        for (id, node) in self.nodes.iter().enumerate() {
            let input = |k: usize| &values[node.inputs[k]];
            let out = match &node.op {
                Op::Input => x.clone(),
                Op::SliceFeature { lo, hi } => input(0).slice_feature(*lo, *hi)?,
                Op::Conv { layer } => conv2d_forward(input(0), &params.convs[*layer])?,
                Op::Relu => relu_forward(input(0)),
                Op::Dropout { rate } => {
                    let (y, mask) = match &mut mode {
                        Mode::Eval => crate::nn::layers::dropout_forward(input(0), *rate, None)?,
                        Mode::Train(rng) => crate::nn::layers::dropout_forward(input(0), *rate, Some(&mut **rng))?,
                        Mode::Frozen(ms) => {
                            let m = ms.get(masks.len()).ok_or_else(|| {
                                Error::ShapeMismatch("fewer frozen dropout masks than dropout layers".into())
                            })?;
                            (apply_mask(input(0), m)?, m.clone())
                        }
                    };
                    mask_of[id] = Some(masks.len());
                    masks.push(mask);
                    y
                }
                Op::MaxPool { window, stride } => {
                    let (y, idx) = maxpool_forward(input(0), *window, *stride)?;
                    pools[id] = Some(idx);
                    y
                }
                Op::Concat { axis } => {
                    let parts: Vec<&Tensor<T>> = node.inputs.iter().map(|&i| &values[i]).collect();
                    concat(&parts, *axis)?
                }
                Op::Dense { layer } => {
                    let flat = flatten_inputs(&values, &node.inputs, n);
                    let p = &params.denses[*layer];
                    Tensor::from_vec((n, 1, 1, p.out_features), dense_forward(&flat, n, p)?)?
                }
            };
            values.push(out);
        }
        Ok(Trace {
            values,
            pools,
            masks,
            mask_of,
            output: self.output,
        })
    }

    /// Gradients of the parameters given `d loss / d logits` (row-major `n × classes`).
    pub fn backward<T: Scalar>(&self, params: &Params<T>, trace: &Trace<T>, grad_logits: &[T]) -> Result<Params<T>> {
        let n = trace.batch();
        let out_shape = trace.values[self.output].shape();
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[self.output] = Some(Tensor::from_vec(out_shape, grad_logits.to_vec())?);
        let mut pg = Params::<T>::zeros(self)?;

        for id in (0..self.nodes.len()).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            let wants = |k: usize| self.requires_grad[node.inputs[k]];
            match &node.op {
                Op::Input => {}
                Op::SliceFeature { lo, .. } => {
                    if wants(0) {
                        let src = trace.values[node.inputs[0]].shape();
                        let mut full = Tensor::zeros(src)?;
                        let w = g.shape().f * src.c;
                        for (dst, row) in full.data_mut().chunks_exact_mut(src.f * src.c).zip(g.data().chunks_exact(w)) {
                            dst[lo * src.c..lo * src.c + w].copy_from_slice(row);
                        }
                        accumulate(&mut grads[node.inputs[0]], full);
                    }
                }
                Op::Conv { layer } => {
                    let x = &trace.values[node.inputs[0]];
                    let cg = conv2d_backward_with(x, &params.convs[*layer], &g, wants(0))?;
                    let slot = &mut pg.convs[*layer];
                    slot.weights = cg.grad_w;
                    slot.bias = cg.grad_b;
                    if let Some(gx) = cg.grad_x {
                        accumulate(&mut grads[node.inputs[0]], gx);
                    }
                }
                Op::Relu => {
                    if wants(0) {
                        let gx = relu_backward(&trace.values[node.inputs[0]], &g)?;
                        accumulate(&mut grads[node.inputs[0]], gx);
                    }
                }
                Op::Dropout { .. } => {
                    if wants(0) {
                        let mask = &trace.masks[trace.mask_of[id].expect("dropout mask recorded")];
                        accumulate(&mut grads[node.inputs[0]], apply_mask(&g, mask)?);
                    }
                }
                Op::MaxPool { .. } => {
                    if wants(0) {
                        let idx = trace.pools[id].as_ref().expect("pool index recorded");
                        accumulate(&mut grads[node.inputs[0]], maxpool_backward(idx, &g)?);
                    }
                }
                Op::Concat { axis } => {
                    let parts: Vec<Shape> = node.inputs.iter().map(|&i| trace.values[i].shape()).collect();
                    for (k, piece) in split_concat(&g, &parts, *axis)?.into_iter().enumerate() {
                        if wants(k) {
                            accumulate(&mut grads[node.inputs[k]], piece);
                        }
                    }
                }
                Op::Dense { layer } => {
                    let flat = flatten_inputs(&trace.values, &node.inputs, n);
                    let p = &params.denses[*layer];
                    let (gx, gw, gb) = dense_backward(&flat, n, p, g.data())?;
                    pg.denses[*layer].weights = gw;
                    pg.denses[*layer].bias = gb;
                    let per: usize = node.inputs.iter().map(|&i| trace.values[i].shape().sample_len()).sum();
                    let mut off = 0;
                    for (k, &i) in node.inputs.iter().enumerate() {
                        let shape = trace.values[i].shape();
                        let len = shape.sample_len();
                        if wants(k) {
                            let mut d = Vec::with_capacity(shape.len());
                            for row in gx.chunks_exact(per) {
                                d.extend_from_slice(&row[off..off + len]);
                            }
                            accumulate(&mut grads[i], Tensor::from_vec(shape, d)?);
                        }
                        off += len;
                    }
                }
            }
        }
        Ok(pg)
    }

    /// Mean softmax cross-entropy over the batch and its parameter gradients.
    pub fn loss_and_grads<T: Scalar>(
        &self,
        params: &Params<T>,
        x: &Tensor<T>,
        labels: &[usize],
        mode: Mode<'_, T>,
    ) -> Result<LossGrads<T>> {
        let trace = self.forward(params, x, mode)?;
        let (loss, grad) = self.loss_from_trace(&trace, labels)?;
        let grads = self.backward(params, &trace, &grad)?;
        Ok(LossGrads { loss, grads, trace })
    }

    /// Mean loss and `d loss / d logits` for a finished forward pass.
    pub fn loss_from_trace<T: Scalar>(&self, trace: &Trace<T>, labels: &[usize]) -> Result<(T, Vec<T>)> {
        let n = trace.batch();
        if labels.len() != n {
            return Err(Error::ShapeMismatch(format!("{} labels for a batch of {n}", labels.len())));
        }
        let classes = self.num_classes();
        let scale = T::of(1.0 / n as f64);
        let mut loss = T::zero();
        let mut grad = Vec::with_capacity(n * classes);
        for (row, &label) in trace.logits().chunks_exact(classes).zip(labels) {
            let (l, g) = softmax_cross_entropy(row, label)?;
            loss += l;
            grad.extend(g.into_iter().map(|v| v * scale));
        }
        Ok((loss * scale, grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Graph {
        let mut b = GraphBuilder::new();
        let x = b.input(6, 6, 1).unwrap();
        let lo = b.slice_feature("lo", x, 0, 4).unwrap();
        let hi = b.slice_feature("hi", x, 2, 6).unwrap();
        let c1 = b.conv("c1", lo, (3, 2), (1, 1), 2).unwrap();
        let c2 = b.conv("c2", hi, (3, 2), (1, 1), 2).unwrap();
        let r1 = b.relu("r1", c1).unwrap();
        let r2 = b.relu("r2", c2).unwrap();
        let cat = b.concat("cat", &[r1, r2], Axis::Channel).unwrap();
        let p = b.maxpool("pool", cat, (2, 2), (2, 2)).unwrap();
        let d = b.dropout("drop", p, 0.5).unwrap();
        let out = b.dense("dense", &[d], 3).unwrap();
        b.finish(out).unwrap()
    }

    #[test]
    fn builder_resolves_shapes_and_rejects_bad_wiring() {
        let g = tiny();
        assert_eq!(g.node("cat").unwrap().1.shape, Shape::new(1, 6, 4, 4));
        assert_eq!(g.node("pool").unwrap().1.shape, Shape::new(1, 3, 2, 4));
        assert_eq!(g.dense_layers()[0].in_features, 24);
        assert!(matches!(g.node("nope"), Err(Error::UnknownLayer(_))));

        let mut b = GraphBuilder::new();
        let x = b.input(4, 4, 1).unwrap();
        let a = b.slice_feature("a", x, 0, 2).unwrap();
        let c = b.slice_feature("c", x, 0, 3).unwrap();
        assert!(b.concat("bad", &[a, c], Axis::Channel).is_err());
        assert!(b.slice_feature("a", x, 0, 1).is_err(), "duplicate name");
        assert!(b.slice_feature("z", x, 3, 9).is_err());
    }

    #[test]
    fn batch_rows_are_independent_and_eval_is_deterministic() {
        let g = tiny();
        let p = Params::<f64>::init_with(&g, 0.5, &mut Rng::new(1)).unwrap();
        let mut rng = Rng::new(2);
        let one: Vec<f64> = (0..36).map(|_| rng.normal()).collect();
        let two = Tensor::from_vec((2, 6, 6, 1), [one.clone(), one.clone()].concat()).unwrap();
        let a = g.forward(&p, &two, Mode::Eval).unwrap();
        assert_eq!(a.logits()[..3], a.logits()[3..]);
        let b = g.forward(&p, &two, Mode::Eval).unwrap();
        assert_eq!(a.logits(), b.logits());
    }

    #[test]
    fn frozen_masks_replay_training_pass() {
        let g = tiny();
        let p = Params::<f64>::init_with(&g, 0.5, &mut Rng::new(1)).unwrap();
        let x = Tensor::truncated_normal((2, 6, 6, 1), 1.0, &mut Rng::new(4)).unwrap();
        let mut rng = Rng::new(3);
        let t = g.forward(&p, &x, Mode::Train(&mut rng)).unwrap();
        let replay = g.forward(&p, &x, Mode::Frozen(t.masks())).unwrap();
        assert_eq!(t.logits(), replay.logits());
        assert!(g.forward(&p, &x, Mode::Frozen(&[])).is_err());
    }

    #[test]
    fn wrong_input_shape_is_rejected() {
        let g = tiny();
        let p = Params::<f32>::init(&g, &mut Rng::new(1)).unwrap();
        let x = Tensor::<f32>::zeros((1, 6, 5, 1)).unwrap();
        assert!(g.forward(&p, &x, Mode::Eval).is_err());
        let other = Params::<f32>::zeros(&{
            let mut b = GraphBuilder::new();
            let x = b.input(6, 6, 1).unwrap();
            let d = b.dense("d", &[x], 3).unwrap();
            b.finish(d).unwrap()
        })
        .unwrap();
        assert!(g.forward(&other, &Tensor::zeros((1, 6, 6, 1)).unwrap(), Mode::Eval).is_err());
    }

    #[test]
    fn grad_logits_sum_to_zero() {
        let g = tiny();
        let p = Params::<f64>::init_with(&g, 0.5, &mut Rng::new(5)).unwrap();
        let x = Tensor::truncated_normal((3, 6, 6, 1), 1.0, &mut Rng::new(6)).unwrap();
        let t = g.forward(&p, &x, Mode::Eval).unwrap();
        let (loss, grad) = g.loss_from_trace(&t, &[0, 1, 2]).unwrap();
        assert!(loss >= 0.0);
        for row in grad.chunks_exact(3) {
            assert!(row.iter().sum::<f64>().abs() < 1e-12);
        }
    }
}
