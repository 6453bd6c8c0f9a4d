//! Dense N-dimensional tensors.
//!
//! Layout is row-major. Activations use `[batch, height, width, channels]`;
//! convolution weights use `[kh, kw, in_channels, out_channels]`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense tensor with an owned row-major buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S: Scalar> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    /// Build a tensor, validating that the element count matches the shape.
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<S>) -> Result<Self> {
        let shape = shape.into();
        let numel = checked_numel(&shape)?;
        if data.len() != numel {
            return Err(Error::Shape(format!(
                "shape {shape:?} implies {numel} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    /// All-zeros tensor. Panics on a malformed shape (programmer error).
    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, S::ZERO)
    }

    /// Constant-filled tensor.
    pub fn full(shape: impl Into<Vec<usize>>, value: S) -> Self {
        let shape = shape.into();
        let numel = checked_numel(&shape).expect("valid tensor shape");
        Tensor {
            shape,
            data: vec![value; numel],
        }
    }

    /// Single-element tensor carrying a scalar value.
    pub fn scalar(value: S) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The value of a single-element tensor.
    pub fn item(&self) -> S {
        debug_assert!(self.is_scalar());
        self.data[0]
    }

    /// Interpret the shape as `[batch, height, width, channels]`.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match *self.shape {
            [b, h, w, c] => Ok((b, h, w, c)),
            _ => Err(Error::Shape(format!(
                "expected a rank-4 [B,H,W,C] tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    /// Elementwise map into a tensor of the same shape.
    pub fn map(&self, f: impl Fn(S) -> S) -> Tensor<S> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Sum of all elements, computed in IEEE total order so the result
    /// depends only on the multiset of values, never on their layout.
    pub fn sum(&self) -> S {
        let mut sorted = self.data.clone();
        sorted.sort_unstable_by(|a, b| a.total_order(*b));
        let mut acc = S::ZERO;
        for x in sorted {
            acc += x;
        }
        acc
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Convert element type (used to move fixtures between precisions).
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| T::from_f64(x.to_f64())).collect(),
        }
    }
}

fn checked_numel(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::Shape("empty shape".into()));
    }
    let mut numel: usize = 1;
    for &d in shape {
        if d == 0 {
            return Err(Error::Shape(format!("zero dimension in shape {shape:?}")));
        }
        numel = numel
            .checked_mul(d)
            .ok_or_else(|| Error::Shape(format!("shape {shape:?} overflows")))?;
    }
    Ok(numel)
}

/// Flat index into a `[B,H,W,C]` buffer.
#[inline(always)]
pub(crate) fn idx4(h: usize, w: usize, c: usize, b: usize, y: usize, x: usize, ch: usize) -> usize {
    ((b * h + y) * w + x) * c + ch
}
