//! The computation graph: an ordered node list with per-node parameters and
//! gradients, plus the forward and reverse passes.

use super::ops;
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OpKind {
    Input,
    Conv2d,
    BatchNorm,
    Elu,
    MaxPool,
    AvgPool,
    ToSequence,
    Flatten,
    Dense,
    Lstm,
    Dropout,
    Softmax,
}

#[derive(Debug, Clone)]
pub struct Conv2dOp<S> {
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
    pub grad_weight: Tensor<S>,
    pub grad_bias: Tensor<S>,
    pub kernel: (usize, usize),
    pub pad_left: usize,
    pub pad_right: usize,
}

#[derive(Debug, Clone)]
pub struct DenseOp<S> {
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
    pub grad_weight: Tensor<S>,
    pub grad_bias: Tensor<S>,
}

#[derive(Debug, Clone)]
pub struct BatchNormOp<S> {
    pub gamma: Tensor<S>,
    pub beta: Tensor<S>,
    pub grad_gamma: Tensor<S>,
    pub grad_beta: Tensor<S>,
    pub running_mean: Tensor<S>,
    pub running_var: Tensor<S>,
    pub momentum: f64,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct LstmOp<S> {
    pub wx: Tensor<S>,
    pub wh: Tensor<S>,
    pub bias: Tensor<S>,
    pub grad_wx: Tensor<S>,
    pub grad_wh: Tensor<S>,
    pub grad_bias: Tensor<S>,
    pub hidden: usize,
    pub return_sequence: bool,
}

#[derive(Debug, Clone)]
pub enum Op<S> {
    Input,
    Conv2d(Conv2dOp<S>),
    BatchNorm(BatchNormOp<S>),
    Elu,
    MaxPool { kh: usize, kw: usize },
    AvgPool { kh: usize, kw: usize },
    ToSequence,
    Flatten,
    Dense(DenseOp<S>),
    Lstm(LstmOp<S>),
    Dropout { rate: f64 },
    Softmax,
}

impl<S: Scalar> Op<S> {
    pub fn kind(&self) -> OpKind {
        match self {
            Op::Input => OpKind::Input,
            Op::Conv2d(_) => OpKind::Conv2d,
            Op::BatchNorm(_) => OpKind::BatchNorm,
            Op::Elu => OpKind::Elu,
            Op::MaxPool { .. } => OpKind::MaxPool,
            Op::AvgPool { .. } => OpKind::AvgPool,
            Op::ToSequence => OpKind::ToSequence,
            Op::Flatten => OpKind::Flatten,
            Op::Dense(_) => OpKind::Dense,
            Op::Lstm(_) => OpKind::Lstm,
            Op::Dropout { .. } => OpKind::Dropout,
            Op::Softmax => OpKind::Softmax,
        }
    }

    /// Learnable tensors in declaration order (the checkpoint order).
    fn params(&self) -> Vec<(&'static str, &Tensor<S>)> {
        match self {
            Op::Conv2d(c) => vec![("weight", &c.weight), ("bias", &c.bias)],
            Op::Dense(d) => vec![("weight", &d.weight), ("bias", &d.bias)],
            Op::BatchNorm(b) => vec![("gamma", &b.gamma), ("beta", &b.beta)],
            Op::Lstm(l) => vec![("wx", &l.wx), ("wh", &l.wh), ("bias", &l.bias)],
            _ => vec![],
        }
    }

    /// (values, gradient) pairs in the same order as [`Op::params`].
    fn param_pairs_mut(&mut self) -> Vec<(&mut Tensor<S>, &mut Tensor<S>)> {
        match self {
            Op::Conv2d(c) => vec![
                (&mut c.weight, &mut c.grad_weight),
                (&mut c.bias, &mut c.grad_bias),
            ],
            Op::Dense(d) => vec![
                (&mut d.weight, &mut d.grad_weight),
                (&mut d.bias, &mut d.grad_bias),
            ],
            Op::BatchNorm(b) => vec![
                (&mut b.gamma, &mut b.grad_gamma),
                (&mut b.beta, &mut b.grad_beta),
            ],
            Op::Lstm(l) => vec![
                (&mut l.wx, &mut l.grad_wx),
                (&mut l.wh, &mut l.grad_wh),
                (&mut l.bias, &mut l.grad_bias),
            ],
            _ => vec![],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Node<S> {
    pub name: String,
    pub op: Op<S>,
    pub input: usize,
    pub out_shape: Vec<usize>,
}

impl<S: Scalar> Node<S> {
    pub fn inputs(&self) -> Vec<usize> {
        if matches!(self.op, Op::Input) {
            vec![]
        } else {
            vec![self.input]
        }
    }
}

enum Aux<S> {
    None,
    Bn(ops::BnAux<S>),
    MaxPool(Vec<u32>),
    Lstm(ops::LstmAux<S>),
    Dropout(Vec<S>),
}

pub struct Graph<S: Scalar> {
    nodes: Vec<Node<S>>,
    input_shape: Vec<usize>,
    init_seed: u64,
    rng: ChaCha8Rng,
    noise_frozen: bool,
    stats_frozen: bool,
    acts: Vec<Tensor<S>>,
    aux: Vec<Aux<S>>,
    mode: Mode,
}

impl<S: Scalar> Clone for Graph<S> {
    fn clone(&self) -> Self {
        Graph {
            nodes: self.nodes.clone(),
            input_shape: self.input_shape.clone(),
            init_seed: self.init_seed,
            rng: self.rng.clone(),
            noise_frozen: self.noise_frozen,
            stats_frozen: self.stats_frozen,
            acts: Vec::new(),
            aux: Vec::new(),
            mode: Mode::Eval,
        }
    }
}

impl<S: Scalar> std::fmt::Debug for Graph<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Graph")
            .field("nodes", &self.nodes.len())
            .field("params", &self.num_params())
            .field("input_shape", &self.input_shape)
            .finish()
    }
}

impl<S: Scalar> Graph<S> {
    pub fn nodes(&self) -> &[Node<S>] {
        &self.nodes
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.nodes.last().expect("graph has nodes").out_shape
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub(super) fn set_noise_frozen(&mut self, frozen: bool) {
        self.noise_frozen = frozen;
        if !frozen {
            self.aux.clear();
        }
    }

    pub(super) fn set_stats_frozen(&mut self, frozen: bool) {
        self.stats_frozen = frozen;
    }

    /// Run the net on a batch shaped `[batch, input_shape...]`. Activations
    /// are cached for a subsequent backward pass.
    pub fn forward(&mut self, input: &Tensor<S>, mode: Mode) -> Result<Tensor<S>> {
        if input.shape().len() != self.input_shape.len() + 1
            || input.shape()[1..] != self.input_shape[..]
        {
            return Err(Error::ShapeMismatch(format!(
                "input {:?} does not match graph input [batch, {:?}]",
                input.shape(),
                self.input_shape
            )));
        }
        self.mode = mode;
        let batch = input.shape()[0];
        let prev_aux = std::mem::take(&mut self.aux);
        self.acts.clear();
        self.acts.push(input.clone());
        let mut aux_out: Vec<Aux<S>> = Vec::with_capacity(self.nodes.len());
        aux_out.push(Aux::None);

        for idx in 1..self.nodes.len() {
            let input_idx = self.nodes[idx].input;
            let reuse = if self.noise_frozen { prev_aux.get(idx) } else { None };
            let (out, aux) = {
                let x = &self.acts[input_idx];
                Self::forward_node(
                    &mut self.nodes[idx],
                    x,
                    batch,
                    mode,
                    &mut self.rng,
                    self.stats_frozen,
                    reuse,
                )?
            };
            self.acts.push(out);
            aux_out.push(aux);
        }
        self.aux = aux_out;
        Ok(self.acts.last().expect("non-empty").clone())
    }

    #[allow(clippy::too_many_arguments)]
    fn forward_node(
        node: &mut Node<S>,
        x: &Tensor<S>,
        batch: usize,
        mode: Mode,
        rng: &mut ChaCha8Rng,
        stats_frozen: bool,
        reuse: Option<&Aux<S>>,
    ) -> Result<(Tensor<S>, Aux<S>)> {
        let out = match &mut node.op {
            Op::Input => unreachable!("input node is never re-evaluated"),
            Op::Conv2d(c) => {
                let y = ops::conv2d_forward(x, &c.weight, &c.bias, c.pad_left, c.pad_right);
                (y, Aux::None)
            }
            Op::BatchNorm(b) => match mode {
                Mode::Train => {
                    let (y, aux) = ops::batchnorm_forward_train(
                        x,
                        &b.gamma,
                        &b.beta,
                        &mut b.running_mean,
                        &mut b.running_var,
                        b.momentum,
                        b.eps,
                        !stats_frozen,
                    );
                    (y, Aux::Bn(aux))
                }
                Mode::Eval => {
                    let y = ops::batchnorm_forward_eval(
                        x,
                        &b.gamma,
                        &b.beta,
                        &b.running_mean,
                        &b.running_var,
                        b.eps,
                    );
                    (y, Aux::None)
                }
            },
            Op::Elu => (ops::elu_forward(x), Aux::None),
            Op::MaxPool { kh, kw } => {
                let (y, argmax) = ops::maxpool_forward(x, *kh, *kw);
                (y, Aux::MaxPool(argmax))
            }
            Op::AvgPool { kh, kw } => (ops::avgpool_forward(x, *kh, *kw), Aux::None),
            Op::ToSequence => (ops::to_sequence_forward(x), Aux::None),
            Op::Flatten => {
                let mut shape = vec![batch];
                shape.push(x.len() / batch);
                (x.clone().reshaped(&shape), Aux::None)
            }
            Op::Dense(d) => (ops::dense_forward(x, &d.weight, &d.bias), Aux::None),
            Op::Lstm(l) => {
                let (y, aux) =
                    ops::lstm_forward(x, &l.wx, &l.wh, &l.bias, l.hidden, l.return_sequence);
                (y, Aux::Lstm(aux))
            }
            Op::Dropout { rate } => match mode {
                Mode::Eval => (x.clone(), Aux::None),
                Mode::Train => {
                    let mask: Vec<S> = match reuse {
                        Some(Aux::Dropout(old)) if old.len() == x.len() => old.clone(),
                        _ => {
                            let keep = 1.0 - *rate;
                            let scale = S::from_f64(1.0 / keep);
                            (0..x.len())
                                .map(|_| {
                                    if rng.random::<f64>() < keep { scale } else { S::zero() }
                                })
                                .collect()
                        }
                    };
                    let mut y = x.clone();
                    for (v, &m) in y.data_mut().iter_mut().zip(&mask) {
                        *v = *v * m;
                    }
                    (y, Aux::Dropout(mask))
                }
            },
            Op::Softmax => (ops::softmax_forward(x), Aux::None),
        };
        let expected: usize = batch * node.out_shape.iter().product::<usize>();
        if out.0.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "node {} produced {} values, expected {expected}",
                node.name,
                out.0.len()
            )));
        }
        Ok(out)
    }

    /// Cached output of the last forward pass.
    pub fn output(&self) -> Option<&Tensor<S>> {
        self.acts.last()
    }

    /// Reverse pass from an explicit output gradient. Parameter gradients
    /// are zeroed first, then populated by reverse accumulation.
    pub fn backward(&mut self, grad_output: &Tensor<S>) -> Result<()> {
        let probs = self
            .acts
            .last()
            .ok_or_else(|| Error::InvalidArgument("backward before forward".into()))?;
        if grad_output.len() != probs.len() {
            return Err(Error::ShapeMismatch(format!(
                "output gradient has {} values, output has {}",
                grad_output.len(),
                probs.len()
            )));
        }
        self.zero_grads();
        self.backward_from(self.nodes.len() - 1, grad_output.clone())
    }

    /// Fused softmax + cross-entropy backward: seeds the reverse pass with
    /// `(probs - onehot) / batch` at the softmax input and returns the mean
    /// cross-entropy loss.
    pub fn backward_cross_entropy(&mut self, targets: &[usize]) -> Result<f64> {
        let last = self.nodes.len() - 1;
        if self.nodes[last].op.kind() != OpKind::Softmax {
            return Err(Error::InvalidArgument(
                "cross-entropy backward requires a softmax output node".into(),
            ));
        }
        let probs = self
            .acts
            .last()
            .ok_or_else(|| Error::InvalidArgument("backward before forward".into()))?
            .clone();
        let classes = *probs.shape().last().unwrap();
        let batch = probs.len() / classes;
        if targets.len() != batch {
            return Err(Error::LengthMismatch { left: targets.len(), right: batch });
        }

        let mut loss = 0.0;
        let mut grad = probs.clone();
        {
            let g = grad.data_mut();
            let inv_n = S::from_f64(1.0 / batch as f64);
            for (row, &t) in targets.iter().enumerate() {
                let p = probs.data()[row * classes + t].as_f64().max(1e-300);
                loss -= p.ln();
                g[row * classes + t] = g[row * classes + t] - S::one();
            }
            for v in g.iter_mut() {
                *v = *v * inv_n;
            }
        }
        loss /= batch as f64;

        self.zero_grads();
        self.backward_from(last - 1, grad)?;
        Ok(loss)
    }

    fn backward_from(&mut self, start: usize, seed: Tensor<S>) -> Result<()> {
        let mut grad = seed;
        let mut idx = start;
        while idx > 0 {
            let input_idx = self.nodes[idx].input;
            grad = {
                let x = &self.acts[input_idx];
                let y = &self.acts[idx];
                let aux = &self.aux[idx];
                Self::backward_node(&mut self.nodes[idx], x, y, aux, &grad, self.mode)?
            };
            idx = input_idx;
        }
        Ok(())
    }

    fn backward_node(
        node: &mut Node<S>,
        x: &Tensor<S>,
        y: &Tensor<S>,
        aux: &Aux<S>,
        dy: &Tensor<S>,
        mode: Mode,
    ) -> Result<Tensor<S>> {
        let dx = match (&mut node.op, aux) {
            (Op::Conv2d(c), _) => ops::conv2d_backward(
                x,
                &c.weight,
                dy,
                c.pad_left,
                c.pad_right,
                &mut c.grad_weight,
                &mut c.grad_bias,
            ),
            (Op::BatchNorm(b), Aux::Bn(bn_aux)) => ops::batchnorm_backward_train(
                dy,
                bn_aux,
                &b.gamma,
                &mut b.grad_gamma,
                &mut b.grad_beta,
            ),
            (Op::BatchNorm(b), _) if mode == Mode::Eval => ops::batchnorm_backward_eval(
                x,
                dy,
                &b.gamma,
                &b.running_mean,
                &b.running_var,
                b.eps,
                &mut b.grad_gamma,
                &mut b.grad_beta,
            ),
            (Op::BatchNorm(_), _) => {
                return Err(Error::InvalidArgument(
                    "batch-norm backward without saved forward state".into(),
                ))
            }
            (Op::Elu, _) => ops::elu_backward(x, y, dy),
            (Op::MaxPool { .. }, Aux::MaxPool(argmax)) => {
                ops::maxpool_backward(dy, argmax, x.shape())
            }
            (Op::MaxPool { .. }, _) => {
                return Err(Error::InvalidArgument("max-pool backward before forward".into()))
            }
            (Op::AvgPool { kh, kw }, _) => ops::avgpool_backward(dy, x.shape(), *kh, *kw),
            (Op::ToSequence, _) => ops::to_sequence_backward(dy, x.shape()),
            (Op::Flatten, _) => dy.clone().reshaped(x.shape()),
            (Op::Dense(d), _) => {
                ops::dense_backward(x, &d.weight, dy, &mut d.grad_weight, &mut d.grad_bias)
            }
            (Op::Lstm(l), Aux::Lstm(lstm_aux)) => ops::lstm_backward(
                x,
                &l.wx,
                &l.wh,
                lstm_aux,
                dy,
                l.return_sequence,
                &mut l.grad_wx,
                &mut l.grad_wh,
                &mut l.grad_bias,
            ),
            (Op::Lstm(_), _) => {
                return Err(Error::InvalidArgument("LSTM backward before forward".into()))
            }
            (Op::Dropout { .. }, Aux::Dropout(mask)) => {
                let mut dx = dy.clone();
                for (v, &m) in dx.data_mut().iter_mut().zip(mask) {
                    *v = *v * m;
                }
                dx
            }
            (Op::Dropout { .. }, _) => dy.clone(), // eval mode: identity
            (Op::Softmax, _) => ops::softmax_backward(y, dy),
            (Op::Input, _) => unreachable!(),
        };
        Ok(dx)
    }

    pub fn zero_grads(&mut self) {
        for node in &mut self.nodes {
            for (_, grad) in node.op.param_pairs_mut() {
                grad.fill(S::zero());
            }
        }
    }

    pub fn num_params(&self) -> usize {
        self.nodes.iter().flat_map(|n| n.op.params()).map(|(_, t)| t.len()).sum()
    }

    /// `(node name, param name, shape)` triples in declaration order.
    pub fn param_layout(&self) -> Vec<(String, String, Vec<usize>)> {
        self.nodes
            .iter()
            .flat_map(|n| {
                n.op
                    .params()
                    .into_iter()
                    .map(move |(pn, t)| (n.name.clone(), pn.to_string(), t.shape().to_vec()))
            })
            .collect()
    }

    /// Visit every (values, grads) pair in declaration order.
    pub fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut [S], &mut [S])) {
        for node in &mut self.nodes {
            for (values, grads) in node.op.param_pairs_mut() {
                f(values.data_mut(), grads.data_mut());
            }
        }
    }

    /// All parameters flattened in declaration order.
    pub fn params_flat(&self) -> Vec<S> {
        let mut out = Vec::with_capacity(self.num_params());
        for node in &self.nodes {
            for (_, t) in node.op.params() {
                out.extend_from_slice(t.data());
            }
        }
        out
    }

    pub fn set_params_flat(&mut self, values: &[S]) {
        let mut offset = 0;
        self.for_each_param_mut(&mut |vals, _| {
            vals.copy_from_slice(&values[offset..offset + vals.len()]);
            offset += vals.len();
        });
        assert_eq!(offset, values.len(), "parameter count mismatch");
    }

    /// Gradients flattened in the same order as [`Graph::params_flat`].
    pub fn grads_flat(&mut self) -> Vec<S> {
        let mut out = Vec::new();
        self.for_each_param_mut(&mut |_, grads| out.extend_from_slice(grads));
        out
    }

    pub fn get_param(&self, flat: usize) -> f64 {
        let mut offset = 0;
        for node in &self.nodes {
            for (_, t) in node.op.params() {
                if flat < offset + t.len() {
                    return t.data()[flat - offset].as_f64();
                }
                offset += t.len();
            }
        }
        panic!("flat parameter index {flat} out of range {offset}");
    }

    pub fn set_param(&mut self, flat: usize, value: f64) {
        let mut offset = 0;
        let mut done = false;
        self.for_each_param_mut(&mut |vals, _| {
            if !done && flat < offset + vals.len() {
                vals[flat - offset] = S::from_f64(value);
                done = true;
            }
            offset += vals.len();
        });
        assert!(done, "flat parameter index {flat} out of range");
    }
}

// ------------------------------------------------------------ initializers

fn glorot_uniform(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, len: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..len).map(|_| rng.random_range(-limit..limit)).collect()
}

/// Orthogonal square matrix by modified Gram-Schmidt on a Gaussian draw.
fn orthogonal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        for u in &cols {
            let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            for (vi, ui) in v.iter_mut().zip(u) {
                *vi -= dot * ui;
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            cols.push(v);
        }
    }
    // Row-major [n, n] with the orthonormal set as columns.
    let mut out = vec![0.0; n * n];
    for (j, col) in cols.iter().enumerate() {
        for i in 0..n {
            out[i * n + j] = col[i];
        }
    }
    out
}

/// Sequential graph builder with static shape inference. Shapes are
/// per-sample; the batch dimension is implicit.
pub struct GraphBuilder<S: Scalar> {
    nodes: Vec<Node<S>>,
    input_shape: Vec<usize>,
    shape: Vec<usize>,
    rng: ChaCha8Rng,
    seed: u64,
}

impl<S: Scalar> GraphBuilder<S> {
    pub fn new(input_shape: &[usize], seed: u64) -> Self {
        let nodes = vec![Node {
            name: "input".into(),
            op: Op::Input,
            input: 0,
            out_shape: input_shape.to_vec(),
        }];
        GraphBuilder {
            nodes,
            input_shape: input_shape.to_vec(),
            shape: input_shape.to_vec(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
        }
    }

    pub fn current_shape(&self) -> &[usize] {
        &self.shape
    }

    fn push(&mut self, name: impl Into<String>, op: Op<S>, out_shape: Vec<usize>) {
        let input = self.nodes.len() - 1;
        self.nodes.push(Node { name: name.into(), op, input, out_shape: out_shape.clone() });
        self.shape = out_shape;
    }

    fn expect_chw(&self, what: &str) -> Result<(usize, usize, usize)> {
        if self.shape.len() != 3 {
            return Err(Error::ShapeMismatch(format!(
                "{what} needs a [C, H, W] input, found {:?}",
                self.shape
            )));
        }
        Ok((self.shape[0], self.shape[1], self.shape[2]))
    }

    /// Valid (unpadded) convolution unless `same_pad_w` keeps the W extent.
    pub fn conv2d(
        &mut self,
        name: &str,
        out_maps: usize,
        kh: usize,
        kw: usize,
        same_pad_w: bool,
    ) -> Result<&mut Self> {
        let (c, h, w) = self.expect_chw("conv2d")?;
        let (pl, pr) = if same_pad_w { ((kw - 1) / 2, kw / 2) } else { (0, 0) };
        if kh > h || kw > w + pl + pr {
            return Err(Error::DimensionUnderflow {
                node: name.to_string(),
                kernel: (kh, kw),
                extent: (h, w),
            });
        }
        let (oh, ow) = (h - kh + 1, w + pl + pr - kw + 1);
        let fan_in = c * kh * kw;
        let fan_out = out_maps * kh * kw;
        let weight = Tensor::from_f64(
            &[out_maps, c, kh, kw],
            &glorot_uniform(&mut self.rng, fan_in, fan_out, out_maps * c * kh * kw),
        );
        let op = Op::Conv2d(Conv2dOp {
            weight,
            bias: Tensor::zeros(&[out_maps]),
            grad_weight: Tensor::zeros(&[out_maps, c, kh, kw]),
            grad_bias: Tensor::zeros(&[out_maps]),
            kernel: (kh, kw),
            pad_left: pl,
            pad_right: pr,
        });
        self.push(name, op, vec![out_maps, oh, ow]);
        Ok(self)
    }

    pub fn batch_norm(&mut self, name: &str) -> Result<&mut Self> {
        let (c, _, _) = self.expect_chw("batch_norm")?;
        let op = Op::BatchNorm(BatchNormOp {
            gamma: Tensor::from_vec(&[c], vec![S::one(); c]),
            beta: Tensor::zeros(&[c]),
            grad_gamma: Tensor::zeros(&[c]),
            grad_beta: Tensor::zeros(&[c]),
            running_mean: Tensor::zeros(&[c]),
            running_var: Tensor::from_vec(&[c], vec![S::one(); c]),
            momentum: 0.9,
            eps: 1e-5,
        });
        let shape = self.shape.clone();
        self.push(name, op, shape);
        Ok(self)
    }

    pub fn elu(&mut self, name: &str) -> &mut Self {
        let shape = self.shape.clone();
        self.push(name, Op::Elu, shape);
        self
    }

    pub fn max_pool(&mut self, name: &str, kh: usize, kw: usize) -> Result<&mut Self> {
        let (c, h, w) = self.expect_chw("max_pool")?;
        if kh > h || kw > w {
            return Err(Error::DimensionUnderflow {
                node: name.to_string(),
                kernel: (kh, kw),
                extent: (h, w),
            });
        }
        self.push(name, Op::MaxPool { kh, kw }, vec![c, h / kh, w / kw]);
        Ok(self)
    }

    pub fn avg_pool(&mut self, name: &str, kh: usize, kw: usize) -> Result<&mut Self> {
        let (c, h, w) = self.expect_chw("avg_pool")?;
        if kh > h || kw > w {
            return Err(Error::DimensionUnderflow {
                node: name.to_string(),
                kernel: (kh, kw),
                extent: (h, w),
            });
        }
        self.push(name, Op::AvgPool { kh, kw }, vec![c, h / kh, w / kw]);
        Ok(self)
    }

    /// `[C, H, W]` to a `[T = W, F = C * H]` sequence.
    pub fn to_sequence(&mut self, name: &str) -> Result<&mut Self> {
        let (c, h, w) = self.expect_chw("to_sequence")?;
        self.push(name, Op::ToSequence, vec![w, c * h]);
        Ok(self)
    }

    pub fn flatten(&mut self, name: &str) -> &mut Self {
        let len = self.shape.iter().product();
        self.push(name, Op::Flatten, vec![len]);
        self
    }

    pub fn dense(&mut self, name: &str, out: usize) -> Result<&mut Self> {
        if self.shape.len() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "dense needs a flat input, found {:?}",
                self.shape
            )));
        }
        let d_in = self.shape[0];
        let weight = Tensor::from_f64(
            &[d_in, out],
            &glorot_uniform(&mut self.rng, d_in, out, d_in * out),
        );
        let op = Op::Dense(DenseOp {
            weight,
            bias: Tensor::zeros(&[out]),
            grad_weight: Tensor::zeros(&[d_in, out]),
            grad_bias: Tensor::zeros(&[out]),
        });
        self.push(name, op, vec![out]);
        Ok(self)
    }

    /// LSTM over a `[T, F]` sequence. Input weights are Glorot-uniform,
    /// recurrent weights orthogonal per gate, and the forget-gate bias
    /// starts at 1.
    pub fn lstm(&mut self, name: &str, hidden: usize, return_sequence: bool) -> Result<&mut Self> {
        if self.shape.len() != 2 {
            return Err(Error::ShapeMismatch(format!(
                "lstm needs a [T, F] input, found {:?}",
                self.shape
            )));
        }
        let (t_len, f) = (self.shape[0], self.shape[1]);
        let wx = Tensor::from_f64(
            &[f, 4 * hidden],
            &glorot_uniform(&mut self.rng, f, hidden, f * 4 * hidden),
        );
        let mut wh_vals = vec![0.0; hidden * 4 * hidden];
        for gate in 0..4 {
            let ortho = orthogonal(&mut self.rng, hidden);
            for i in 0..hidden {
                for j in 0..hidden {
                    wh_vals[i * 4 * hidden + gate * hidden + j] = ortho[i * hidden + j];
                }
            }
        }
        let wh = Tensor::from_f64(&[hidden, 4 * hidden], &wh_vals);
        let mut bias = vec![S::zero(); 4 * hidden];
        for b in bias.iter_mut().skip(hidden).take(hidden) {
            *b = S::one(); // forget gate
        }
        let op = Op::Lstm(LstmOp {
            wx,
            wh,
            bias: Tensor::from_vec(&[4 * hidden], bias),
            grad_wx: Tensor::zeros(&[f, 4 * hidden]),
            grad_wh: Tensor::zeros(&[hidden, 4 * hidden]),
            grad_bias: Tensor::zeros(&[4 * hidden]),
            hidden,
            return_sequence,
        });
        let out_shape = if return_sequence { vec![t_len, hidden] } else { vec![hidden] };
        self.push(name, op, out_shape);
        Ok(self)
    }

    pub fn dropout(&mut self, name: &str, rate: f64) -> Result<&mut Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!("dropout rate {rate} outside [0, 1)")));
        }
        let shape = self.shape.clone();
        self.push(name, Op::Dropout { rate }, shape);
        Ok(self)
    }

    pub fn softmax(&mut self, name: &str) -> &mut Self {
        let shape = self.shape.clone();
        self.push(name, Op::Softmax, shape);
        self
    }

    pub fn build(self) -> Graph<S> {
        Graph {
            nodes: self.nodes,
            input_shape: self.input_shape,
            init_seed: self.seed,
            rng: ChaCha8Rng::seed_from_u64(self.seed ^ 0x9e37_79b9_7f4a_7c15),
            noise_frozen: false,
            stats_frozen: false,
            acts: Vec::new(),
            aux: Vec::new(),
            mode: Mode::Eval,
        }
    }
}
