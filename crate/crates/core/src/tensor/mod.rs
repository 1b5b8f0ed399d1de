//! Dense NCHW tensors and a tape-based reverse-mode autodiff engine.
//!
//! [`Tensor`] is a plain value (shape + contiguous data). [`Graph`] records
//! operations over tensors as they are executed and can sweep them in
//! reverse to populate gradients. A graph is built once per forward pass;
//! running `backward` a second time on the same graph is an error.

use std::cell::Cell;
use std::fmt;

mod graph;
pub mod kernels;
mod optim;

pub use graph::{Activation, BnMode, Graph, ReduceKind, ResizeMethod, RunningStats, Var};
pub use kernels::Padding;
pub use optim::{Adam, AdamConfig};

use crate::{Error, Real, Result};

thread_local! {
    static ALLOCATIONS: Cell<u64> = const { Cell::new(0) };
}

/// Number of tensors allocated on the current thread so far.
pub fn allocation_count() -> u64 {
    ALLOCATIONS.with(|c| c.get())
}

fn note_allocation() {
    ALLOCATIONS.with(|c| c.set(c.get() + 1));
}

/// `(batch, channels, height, width)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const SCALAR: Shape = Shape { n: 1, c: 1, h: 1, w: 1 };

    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    pub fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn is_scalar(&self) -> bool {
        self.numel() == 1
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.n, self.c, self.h, self.w)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// A tensor with a stable name, as stored in parameter sets and checkpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub value: Tensor,
}

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<Real>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("len", &self.data.len())
            .finish()
    }
}

impl Tensor {
    pub fn from_vec(shape: Shape, data: Vec<Real>) -> Result<Self> {
        if shape.n == 0 || shape.c == 0 || shape.h == 0 || shape.w == 0 {
            return Err(Error::invalid("tensor", format!("zero-sized dimension in {shape}")));
        }
        if data.len() != shape.numel() {
            return Err(Error::invalid(
                "tensor",
                format!("data length {} does not match shape {shape}", data.len()),
            ));
        }
        note_allocation();
        Ok(Tensor { shape, data })
    }

    pub fn full(shape: Shape, value: Real) -> Self {
        assert!(shape.numel() > 0, "zero-sized tensor {shape}");
        note_allocation();
        Tensor {
            shape,
            data: vec![value; shape.numel()],
        }
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: Shape) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn scalar(value: Real) -> Self {
        Self::full(Shape::SCALAR, value)
    }

    /// 1-D parameter vector stored as `[1, len, 1, 1]`.
    pub fn vector(values: Vec<Real>) -> Self {
        let shape = Shape::new(1, values.len(), 1, 1);
        Self::from_vec(shape, values).expect("non-empty vector")
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[Real] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Real] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Real> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Real {
        debug_assert!(self.shape.is_scalar());
        self.data[0]
    }

    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> Real {
        let s = self.shape;
        self.data[((n * s.c + c) * s.h + h) * s.w + w]
    }

    pub fn reshape(mut self, shape: Shape) -> Result<Self> {
        if shape.numel() != self.shape.numel() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                left: self.shape,
                right: shape,
            });
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(Real) -> Real) -> Self {
        note_allocation();
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Batch item `index` as a `[1, C, H, W]` tensor.
    pub fn batch_item(&self, index: usize) -> Self {
        let s = self.shape;
        let len = s.c * s.plane();
        let data = self.data[index * len..(index + 1) * len].to_vec();
        Tensor::from_vec(Shape::new(1, s.c, s.h, s.w), data).expect("valid slice")
    }

    /// Concatenates tensors of identical `C, H, W` along the batch axis.
    pub fn stack(items: &[Tensor]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::invalid("stack", "no tensors to stack"))?;
        let s = first.shape;
        let mut data = Vec::with_capacity(s.numel() * items.len());
        let mut n = 0;
        for t in items {
            let ts = t.shape;
            if (ts.c, ts.h, ts.w) != (s.c, s.h, s.w) {
                return Err(Error::ShapeMismatch {
                    op: "stack",
                    left: s,
                    right: ts,
                });
            }
            n += ts.n;
            data.extend_from_slice(&t.data);
        }
        Tensor::from_vec(Shape::new(n, s.c, s.h, s.w), data)
    }

    pub fn sum(&self) -> Real {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> Real {
        self.sum() / self.numel() as Real
    }

    pub fn max_abs(&self) -> Real {
        self.data.iter().fold(0.0, |m: Real, v| m.max(v.abs()))
    }

    pub fn mean_abs_diff(&self, other: &Tensor) -> Result<Real> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op: "mean_abs_diff",
                left: self.shape,
                right: other.shape,
            });
        }
        let total: Real = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .sum();
        Ok(total / self.numel() as Real)
    }

    pub(crate) fn expect_same_shape(&self, other: &Tensor, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op,
                left: self.shape,
                right: other.shape,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_mismatched_data_length() {
        assert!(Tensor::from_vec(Shape::new(1, 1, 2, 2), vec![0.0; 3]).is_err());
        assert!(Tensor::from_vec(Shape::new(1, 0, 2, 2), vec![]).is_err());
    }

    #[test]
    fn stack_and_split_batch() {
        let a = Tensor::full(Shape::new(1, 2, 2, 2), 1.0);
        let b = Tensor::full(Shape::new(1, 2, 2, 2), 2.0);
        let s = Tensor::stack(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(s.shape(), Shape::new(2, 2, 2, 2));
        assert_eq!(s.batch_item(0), a);
        assert_eq!(s.batch_item(1), b);
    }

    #[test]
    fn allocation_counter_tracks_this_thread() {
        let before = allocation_count();
        let _t = Tensor::zeros(Shape::new(1, 1, 3, 3));
        assert_eq!(allocation_count(), before + 1);
    }
}
