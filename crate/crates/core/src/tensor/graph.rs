use super::kernels::{self, Padding};
use super::{Shape, Tensor};
use crate::{Error, Real, Result};

/// Handle to a node of a [`Graph`]. Only meaningful for the graph that issued it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    LeakyRelu(Real),
    Tanh,
    Sigmoid,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ReduceKind {
    Mean,
    Sum,
    /// Element-mean of `|input − other|`.
    L1Distance(Var),
    /// Element-mean of `(input − target)²`.
    SquaredDistanceTo(Real),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResizeMethod {
    Bilinear,
    Nearest,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Eval,
}

/// Exponential moving averages of per-channel batch statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<Real>,
    pub var: Vec<Real>,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        pad: Padding,
    },
    ConvTranspose2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    },
    BatchNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        mode: BnMode,
        mean: Vec<Real>,
        invstd: Vec<Real>,
    },
    Activation {
        input: Var,
        kind: Activation,
    },
    Concat {
        a: Var,
        b: Var,
    },
    SliceChannels {
        input: Var,
        start: usize,
    },
    Add {
        a: Var,
        b: Var,
    },
    Scale {
        input: Var,
        factor: Real,
    },
    Resize {
        input: Var,
        method: ResizeMethod,
    },
    Reduce {
        input: Var,
        kind: ReduceKind,
    },
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match *self {
            Op::Leaf => vec![],
            Op::Conv2d {
                input,
                weight,
                bias,
                ..
            }
            | Op::ConvTranspose2d {
                input,
                weight,
                bias,
                ..
            } => std::iter::once(input)
                .chain(std::iter::once(weight))
                .chain(bias)
                .collect(),
            Op::BatchNorm {
                input, gamma, beta, ..
            } => vec![input, gamma, beta],
            Op::Concat { a, b } | Op::Add { a, b } => vec![a, b],
            Op::Reduce {
                input,
                kind: ReduceKind::L1Distance(other),
            } => vec![input, other],
            Op::Activation { input, .. }
            | Op::SliceChannels { input, .. }
            | Op::Scale { input, .. }
            | Op::Resize { input, .. }
            | Op::Reduce { input, .. } => vec![input],
        }
    }
}

struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    requires_grad: bool,
    op: Op,
}

/// Record of executed tensor operations, in execution (hence topological) order.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    backward_done: bool,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn parameter(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// A copy of `v` cut off from the gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last `backward` loss with respect to `v`; `None` when
    /// `v` does not require grad or the loss does not depend on it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        self.conv2d_padded(input, weight, bias, stride, Padding::uniform(padding))
    }

    pub fn conv2d_padded(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        pad: Padding,
    ) -> Result<Var> {
        let op = Op::Conv2d {
            input,
            weight,
            bias,
            stride,
            pad,
        };
        let value = self.compute(&op)?;
        Ok(self.push(value, op))
    }

    pub fn conv_transpose2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let op = Op::ConvTranspose2d {
            input,
            weight,
            bias,
            stride,
            padding,
        };
        let value = self.compute(&op)?;
        Ok(self.push(value, op))
    }

    /// Per-channel batch normalisation. In train mode the batch statistics are
    /// used and folded into `stats`; in eval mode `stats` is read only.
    #[allow(clippy::too_many_arguments)]
    pub fn batch_norm2d(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        stats: &mut RunningStats,
        mode: BnMode,
        eps: Real,
        momentum: Real,
    ) -> Result<Var> {
        const OP: &str = "batch_norm2d";
        let s = self.shape(input);
        for p in [gamma, beta] {
            if self.value(p).numel() != s.c {
                return Err(Error::ShapeMismatch {
                    op: OP,
                    left: s,
                    right: self.shape(p),
                });
            }
        }
        if stats.channels() != s.c {
            return Err(Error::invalid(
                OP,
                format!("running stats have {} channels, input has {}", stats.channels(), s.c),
            ));
        }
        let (mean, invstd) = match mode {
            BnMode::Train => {
                let count = s.n * s.plane();
                if count < 2 {
                    return Err(Error::invalid(
                        OP,
                        format!("train mode needs more than one value per channel, input is {s}"),
                    ));
                }
                let (mean, var) = kernels::channel_moments(self.value(input));
                let unbias = count as Real / (count - 1) as Real;
                for c in 0..s.c {
                    stats.mean[c] = (1.0 - momentum) * stats.mean[c] + momentum * mean[c];
                    stats.var[c] = (1.0 - momentum) * stats.var[c] + momentum * var[c] * unbias;
                }
                let invstd = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
                (mean, invstd)
            }
            BnMode::Eval => (
                stats.mean.clone(),
                stats.var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect(),
            ),
        };
        let op = Op::BatchNorm {
            input,
            gamma,
            beta,
            mode,
            mean,
            invstd,
        };
        let value = self.compute(&op)?;
        Ok(self.push(value, op))
    }

    pub fn activation(&mut self, input: Var, kind: Activation) -> Result<Var> {
        if let Activation::LeakyRelu(slope) = kind {
            if !(slope > 0.0 && slope < 1.0) {
                return Err(Error::invalid("activation", format!("leaky slope {slope} outside (0, 1)")));
            }
        }
        let op = Op::Activation { input, kind };
        let value = self.compute(&op)?;
        Ok(self.push(value, op))
    }

    pub fn leaky_relu(&mut self, input: Var, slope: Real) -> Result<Var> {
        self.activation(input, Activation::LeakyRelu(slope))
    }

    pub fn tanh(&mut self, input: Var) -> Result<Var> {
        self.activation(input, Activation::Tanh)
    }

    pub fn sigmoid(&mut self, input: Var) -> Result<Var> {
        self.activation(input, Activation::Sigmoid)
    }

    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let op = Op::Concat { a, b };
        let value = self.compute(&op)?;
        Ok(self.push(value, op))
    }

    pub fn slice_channels(&mut self, input: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(input);
        if len == 0 || start + len > s.c {
            return Err(Error::invalid(
                "slice_channels",
                format!("channels {start}..{} out of range for {s}", start + len),
            ));
        }
        let op = Op::SliceChannels { input, start };
        let value = slice_channels(self.value(input), start, len);
        Ok(self.push(value, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let op = Op::Add { a, b };
        let value = self.compute(&op)?;
        Ok(self.push(value, op))
    }

    pub fn scale(&mut self, input: Var, factor: Real) -> Result<Var> {
        let op = Op::Scale { input, factor };
        let value = self.compute(&op)?;
        Ok(self.push(value, op))
    }

    /// Resamples to `h × w`. Nearest-neighbour is not differentiable and is
    /// refused on gradient-requiring inputs.
    pub fn resize(&mut self, input: Var, h: usize, w: usize, method: ResizeMethod) -> Result<Var> {
        if method == ResizeMethod::Nearest && self.requires_grad(input) {
            return Err(Error::NotDifferentiable("nearest resize"));
        }
        let value = match method {
            ResizeMethod::Bilinear => kernels::resize_bilinear(self.value(input), h, w)?,
            ResizeMethod::Nearest => kernels::resize_nearest(self.value(input), h, w)?,
        };
        Ok(self.push(value, Op::Resize { input, method }))
    }

    pub fn reduce(&mut self, input: Var, kind: ReduceKind) -> Result<Var> {
        let op = Op::Reduce { input, kind };
        let value = self.compute(&op)?;
        Ok(self.push(value, op))
    }

    pub fn mean(&mut self, input: Var) -> Result<Var> {
        self.reduce(input, ReduceKind::Mean)
    }

    pub fn sum(&mut self, input: Var) -> Result<Var> {
        self.reduce(input, ReduceKind::Sum)
    }

    pub fn l1_distance(&mut self, a: Var, b: Var) -> Result<Var> {
        self.reduce(a, ReduceKind::L1Distance(b))
    }

    /// Sums scalars left to right.
    pub fn add_all(&mut self, terms: &[Var]) -> Result<Var> {
        let (&first, rest) = terms
            .split_first()
            .ok_or_else(|| Error::invalid("add_all", "no terms"))?;
        rest.iter().try_fold(first, |acc, &t| self.add(acc, t))
    }

    fn compute(&self, op: &Op) -> Result<Tensor> {
        let v = |var: Var| &self.nodes[var.0].value;
        match *op {
            Op::Leaf => unreachable!("leaves carry their own value"),
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                pad,
            } => kernels::conv2d(v(input), v(weight), bias.map(v), stride, pad),
            Op::ConvTranspose2d {
                input,
                weight,
                bias,
                stride,
                padding,
            } => kernels::conv_transpose2d(v(input), v(weight), bias.map(v), stride, padding),
            Op::BatchNorm {
                input,
                gamma,
                beta,
                ref mean,
                ref invstd,
                ..
            } => Ok(kernels::batch_norm_apply(
                v(input),
                v(gamma).data(),
                v(beta).data(),
                mean,
                invstd,
            )),
            Op::Activation { input, kind } => Ok(match kind {
                Activation::LeakyRelu(slope) => v(input).map(|x| if x > 0.0 { x } else { slope * x }),
                Activation::Tanh => v(input).map(Real::tanh),
                Activation::Sigmoid => v(input).map(|x| 1.0 / (1.0 + (-x).exp())),
            }),
            Op::Concat { a, b } => concat_channels(v(a), v(b)),
            Op::Add { a, b } => {
                v(a).expect_same_shape(v(b), "add")?;
                let mut out = v(a).clone();
                out.data_mut()
                    .iter_mut()
                    .zip(v(b).data())
                    .for_each(|(x, y)| *x += y);
                Ok(out)
            }
            Op::Scale { input, factor } => Ok(v(input).map(|x| x * factor)),
            Op::SliceChannels { .. } | Op::Resize { .. } => {
                unreachable!("computed eagerly with an explicit output size")
            }
            Op::Reduce { input, kind } => {
                let x = v(input);
                let n = x.numel() as Real;
                let value = match kind {
                    ReduceKind::Mean => x.sum() / n,
                    ReduceKind::Sum => x.sum(),
                    ReduceKind::L1Distance(other) => {
                        x.expect_same_shape(v(other), "l1_distance")?;
                        x.data()
                            .iter()
                            .zip(v(other).data())
                            .map(|(a, b)| (a - b).abs())
                            .sum::<Real>()
                            / n
                    }
                    ReduceKind::SquaredDistanceTo(t) => {
                        x.data().iter().map(|a| (a - t) * (a - t)).sum::<Real>() / n
                    }
                };
                Ok(Tensor::scalar(value))
            }
        }
    }

    /// Re-executes every recorded operation from the leaf values and returns
    /// the recomputed node values. Batch-norm reuses the statistics it
    /// recorded; running statistics are not touched.
    pub fn replay(&self) -> Result<Vec<Tensor>> {
        let mut replayed = Graph::new();
        for node in &self.nodes {
            let value = match &node.op {
                Op::Leaf => node.value.clone(),
                Op::SliceChannels { input, start } => {
                    slice_channels(replayed.value(*input), *start, node.value.shape().c)
                }
                Op::Resize { input, method } => {
                    let s = node.value.shape();
                    match method {
                        ResizeMethod::Bilinear => kernels::resize_bilinear(replayed.value(*input), s.h, s.w)?,
                        ResizeMethod::Nearest => kernels::resize_nearest(replayed.value(*input), s.h, s.w)?,
                    }
                }
                op => replayed.compute(op)?,
            };
            replayed.nodes.push(Node {
                value,
                grad: None,
                requires_grad: false,
                op: node.op.clone(),
            });
        }
        Ok(replayed.nodes.into_iter().map(|n| n.value).collect())
    }

    /// Reverse sweep from a scalar `loss`, accumulating gradients additively
    /// into every gradient-requiring node the loss depends on.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::BackwardTwice);
        }
        let s = self.shape(loss);
        if !s.is_scalar() {
            return Err(Error::NonScalarLoss(s));
        }
        self.backward_done = true;
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(Tensor::ones(s));
        }
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            for (var, contribution) in self.input_grads(i, &g)? {
                accumulate(&mut grads[var.0], contribution);
            }
            self.nodes[i].grad = Some(g);
        }
        Ok(())
    }

    fn input_grads(&self, i: usize, g: &Tensor) -> Result<Vec<(Var, Tensor)>> {
        let node = &self.nodes[i];
        let v = |var: Var| &self.nodes[var.0].value;
        let rg = |var: Var| self.nodes[var.0].requires_grad;
        let mut out = Vec::new();
        match node.op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                pad,
            } => {
                let need = [rg(input), rg(weight), bias.is_some_and(rg)];
                let (dx, dw, db) = kernels::conv2d_backward(v(input), v(weight), stride, pad, g, need)?;
                push_some(&mut out, input, dx);
                push_some(&mut out, weight, dw);
                if let Some(b) = bias {
                    push_some(&mut out, b, db.map(|d| d.reshape(v(b).shape())).transpose()?);
                }
            }
            Op::ConvTranspose2d {
                input,
                weight,
                bias,
                stride,
                padding,
            } => {
                let need = [rg(input), rg(weight), bias.is_some_and(rg)];
                let (dx, dw, db) =
                    kernels::conv_transpose2d_backward(v(input), v(weight), stride, padding, g, need)?;
                push_some(&mut out, input, dx);
                push_some(&mut out, weight, dw);
                if let Some(b) = bias {
                    push_some(&mut out, b, db.map(|d| d.reshape(v(b).shape())).transpose()?);
                }
            }
            Op::BatchNorm {
                input,
                gamma,
                beta,
                mode,
                ref mean,
                ref invstd,
                ..
            } => {
                let (dx, dgamma, dbeta) = kernels::batch_norm_backward(
                    v(input),
                    v(gamma).data(),
                    mean,
                    invstd,
                    g,
                    mode == BnMode::Train,
                );
                if rg(input) {
                    out.push((input, dx));
                }
                if rg(gamma) {
                    out.push((gamma, Tensor::from_vec(v(gamma).shape(), dgamma)?));
                }
                if rg(beta) {
                    out.push((beta, Tensor::from_vec(v(beta).shape(), dbeta)?));
                }
            }
            Op::Activation { input, kind } => {
                let mut dx = g.clone();
                let src = match kind {
                    Activation::LeakyRelu(_) => v(input),
                    Activation::Tanh | Activation::Sigmoid => &node.value,
                };
                for (d, &x) in dx.data_mut().iter_mut().zip(src.data()) {
                    *d *= match kind {
                        Activation::LeakyRelu(slope) => {
                            if x > 0.0 {
                                1.0
                            } else {
                                slope
                            }
                        }
                        Activation::Tanh => 1.0 - x * x,
                        Activation::Sigmoid => x * (1.0 - x),
                    };
                }
                out.push((input, dx));
            }
            Op::Concat { a, b } => {
                let ca = v(a).shape().c;
                if rg(a) {
                    out.push((a, slice_channels(g, 0, ca)));
                }
                if rg(b) {
                    out.push((b, slice_channels(g, ca, v(b).shape().c)));
                }
            }
            Op::SliceChannels { input, start } => {
                let s = v(input).shape();
                let len = g.shape().c;
                let mut dx = Tensor::zeros(s);
                let plane = s.plane();
                for n in 0..s.n {
                    let dst = (n * s.c + start) * plane;
                    let src = n * len * plane;
                    dx.data_mut()[dst..dst + len * plane]
                        .copy_from_slice(&g.data()[src..src + len * plane]);
                }
                out.push((input, dx));
            }
            Op::Add { a, b } => {
                if rg(a) {
                    out.push((a, g.clone()));
                }
                if rg(b) {
                    out.push((b, g.clone()));
                }
            }
            Op::Scale { input, factor } => out.push((input, g.map(|d| d * factor))),
            Op::Resize { input, method } => {
                debug_assert_eq!(method, ResizeMethod::Bilinear);
                out.push((input, kernels::resize_bilinear_backward(g, v(input).shape())));
            }
            Op::Reduce { input, kind } => {
                let x = v(input);
                let upstream = g.item();
                let n = x.numel() as Real;
                match kind {
                    ReduceKind::Mean => out.push((input, Tensor::full(x.shape(), upstream / n))),
                    ReduceKind::Sum => out.push((input, Tensor::full(x.shape(), upstream))),
                    ReduceKind::L1Distance(other) => {
                        let k = upstream / n;
                        let signs = x
                            .data()
                            .iter()
                            .zip(v(other).data())
                            .map(|(a, b)| k * sign(a - b))
                            .collect::<Vec<_>>();
                        let da = Tensor::from_vec(x.shape(), signs)?;
                        if rg(other) {
                            out.push((other, da.map(|d| -d)));
                        }
                        if rg(input) {
                            out.push((input, da));
                        }
                    }
                    ReduceKind::SquaredDistanceTo(t) => {
                        let k = 2.0 * upstream / n;
                        out.push((input, x.map(|a| k * (a - t))));
                    }
                }
            }
        }
        out.retain(|(var, _)| rg(*var));
        Ok(out)
    }
}

fn sign(x: Real) -> Real {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn push_some(out: &mut Vec<(Var, Tensor)>, var: Var, grad: Option<Tensor>) {
    if let Some(g) = grad {
        out.push((var, g));
    }
}

fn accumulate(slot: &mut Option<Tensor>, contribution: Tensor) {
    match slot {
        Some(existing) => existing
            .data_mut()
            .iter_mut()
            .zip(contribution.data())
            .for_each(|(a, b)| *a += b),
        None => *slot = Some(contribution),
    }
}

fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (sa, sb) = (a.shape(), b.shape());
    if (sa.n, sa.h, sa.w) != (sb.n, sb.h, sb.w) {
        return Err(Error::ShapeMismatch {
            op: "concat_channels",
            left: sa,
            right: sb,
        });
    }
    let out_shape = Shape::new(sa.n, sa.c + sb.c, sa.h, sa.w);
    let (la, lb) = (sa.c * sa.plane(), sb.c * sb.plane());
    let mut data = Vec::with_capacity(out_shape.numel());
    for n in 0..sa.n {
        data.extend_from_slice(&a.data()[n * la..(n + 1) * la]);
        data.extend_from_slice(&b.data()[n * lb..(n + 1) * lb]);
    }
    Tensor::from_vec(out_shape, data)
}

fn slice_channels(x: &Tensor, start: usize, len: usize) -> Tensor {
    let s = x.shape();
    let plane = s.plane();
    let mut data = Vec::with_capacity(s.n * len * plane);
    for n in 0..s.n {
        let from = (n * s.c + start) * plane;
        data.extend_from_slice(&x.data()[from..from + len * plane]);
    }
    Tensor::from_vec(Shape::new(s.n, len, s.h, s.w), data).expect("slice in range")
}
