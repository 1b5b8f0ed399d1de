use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::plan::{BlockActivation, BlockSpec, ConvKind};
use crate::tensor::{Activation, BnMode, Graph, NamedTensor, RunningStats, Shape, Tensor, Var};
use crate::{Error, Real, Result};

/// Batch-norm running statistics under a stable name.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedStats {
    pub name: String,
    pub stats: RunningStats,
}

/// Flat list of the trainable tensors of a network plus its batch-norm state.
///
/// The order is fixed at construction and is the order used by the
/// optimizer, by checkpoints and by [`ParamStore::bind`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    pub params: Vec<NamedTensor>,
    pub stats: Vec<NamedStats>,
}

impl ParamStore {
    fn push(&mut self, name: String, value: Tensor) -> usize {
        self.params.push(NamedTensor { name, value });
        self.params.len() - 1
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Inserts every parameter into `g` as a leaf.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| g.leaf(p.value.clone(), trainable))
            .collect()
    }

    pub fn grads(&self, g: &Graph, bound: &[Var]) -> Vec<Option<Tensor>> {
        bound.iter().map(|&v| g.grad(v).cloned()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.value)
    }

    /// Overwrites values and running statistics from `other`, which must
    /// carry the same names and shapes in the same order.
    pub fn assign(&mut self, other: &ParamStore) -> Result<()> {
        if self.params.len() != other.params.len() || self.stats.len() != other.stats.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors and {} stat sets, found {} and {}",
                self.params.len(),
                self.stats.len(),
                other.params.len(),
                other.stats.len()
            )));
        }
        for (a, b) in self.params.iter().zip(&other.params) {
            if a.name != b.name || a.value.shape() != b.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{}` {} does not match stored `{}` {}",
                    a.name,
                    a.value.shape(),
                    b.name,
                    b.value.shape()
                )));
            }
        }
        for (a, b) in self.stats.iter().zip(&other.stats) {
            if a.name != b.name || a.stats.channels() != b.stats.channels() {
                return Err(Error::Checkpoint(format!(
                    "running stats `{}` do not match stored `{}`",
                    a.name, b.name
                )));
            }
        }
        self.params.clone_from(&other.params);
        self.stats.clone_from(&other.stats);
        Ok(())
    }
}

/// Batch-norm and activation settings shared by all blocks of a forward pass.
#[derive(Clone, Copy, Debug)]
pub(crate) struct BlockContext {
    pub mode: BnMode,
    pub eps: Real,
    pub momentum: Real,
    pub slope: Real,
}

#[derive(Clone, Debug)]
struct NormIds {
    gamma: usize,
    beta: usize,
    stats: usize,
}

/// A planned block bound to its parameter slots in a [`ParamStore`].
#[derive(Clone, Debug)]
pub(crate) struct Layer {
    pub spec: BlockSpec,
    weight: usize,
    bias: Option<usize>,
    norm: Option<NormIds>,
}

pub(crate) fn weight_shape(spec: &BlockSpec) -> Shape {
    let k = spec.kernel;
    match spec.kind {
        ConvKind::Conv(_) => Shape::new(spec.out_ch, spec.in_ch, k, k),
        ConvKind::Transposed(_) => Shape::new(spec.in_ch, spec.out_ch, k, k),
    }
}

impl Layer {
    /// Registers the parameters of `spec` with N(0, 0.02) weights, zero
    /// biases, unit gamma and zero beta.
    pub fn new(store: &mut ParamStore, spec: BlockSpec, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0f64, 0.02).expect("valid std");
        let shape = weight_shape(&spec);
        let data = (0..shape.numel()).map(|_| normal.sample(rng) as Real).collect();
        let weight = store.push(
            format!("{}.weight", spec.name),
            Tensor::from_vec(shape, data).expect("planned shape"),
        );
        let bias = spec
            .bias
            .then(|| store.push(format!("{}.bias", spec.name), Tensor::vector(vec![0.0; spec.out_ch])));
        let norm = spec.norm.then(|| {
            let gamma = store.push(format!("{}.gamma", spec.name), Tensor::vector(vec![1.0; spec.out_ch]));
            let beta = store.push(format!("{}.beta", spec.name), Tensor::vector(vec![0.0; spec.out_ch]));
            store.stats.push(NamedStats {
                name: format!("{}.running", spec.name),
                stats: RunningStats::new(spec.out_ch),
            });
            NormIds {
                gamma,
                beta,
                stats: store.stats.len() - 1,
            }
        });
        Layer {
            spec,
            weight,
            bias,
            norm,
        }
    }

    pub fn weight_index(&self) -> usize {
        self.weight
    }

    /// Parameter indices owned by this block.
    pub fn indices(&self) -> Vec<usize> {
        let mut out = vec![self.weight];
        out.extend(self.bias);
        if let Some(n) = &self.norm {
            out.extend([n.gamma, n.beta]);
        }
        out
    }

    pub fn apply(
        &self,
        g: &mut Graph,
        vars: &[Var],
        stats: &mut [NamedStats],
        x: Var,
        ctx: BlockContext,
    ) -> Result<Var> {
        let s = &self.spec;
        let weight = vars[self.weight];
        let bias = self.bias.map(|b| vars[b]);
        let mut y = match s.kind {
            ConvKind::Conv(pad) => g.conv2d_padded(x, weight, bias, s.stride, pad)?,
            ConvKind::Transposed(pad) => g.conv_transpose2d(x, weight, bias, s.stride, pad)?,
        };
        if let Some(n) = &self.norm {
            y = g.batch_norm2d(
                y,
                vars[n.gamma],
                vars[n.beta],
                &mut stats[n.stats].stats,
                ctx.mode,
                ctx.eps,
                ctx.momentum,
            )?;
        }
        match s.activation {
            Some(BlockActivation::Leaky) => g.activation(y, Activation::LeakyRelu(ctx.slope)),
            Some(BlockActivation::Tanh) => g.tanh(y),
            None => Ok(y),
        }
    }
}

/// Gaussian matrix whose rows (or columns, whichever are fewer) are
/// orthonormalised, scaled by `gain`.
pub(crate) fn orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut ChaCha8Rng) -> Vec<Real> {
    let transpose = rows > cols;
    let (r, c) = if transpose { (cols, rows) } else { (rows, cols) };
    let mut m: Vec<f64> = (0..r * c)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    for i in 0..r {
        for j in 0..i {
            let dot: f64 = (0..c).map(|t| m[i * c + t] * m[j * c + t]).sum();
            for t in 0..c {
                m[i * c + t] -= dot * m[j * c + t];
            }
        }
        let norm = (0..c).map(|t| m[i * c + t].powi(2)).sum::<f64>().sqrt().max(1e-12);
        for t in 0..c {
            m[i * c + t] /= norm;
        }
    }
    let mut out = vec![0.0; rows * cols];
    for i in 0..r {
        for j in 0..c {
            let (a, b) = if transpose { (j, i) } else { (i, j) };
            out[a * cols + b] = (m[i * c + j] * gain) as Real;
        }
    }
    out
}
