//! Pointwise activations.

use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn relu<S: Scalar>(input: &Tensor<S>) -> Tensor<S> {
    input.map(|x| x.max(S::ZERO))
}

pub fn relu_backward<S: Scalar>(input: &Tensor<S>, d_out: &Tensor<S>) -> Tensor<S> {
    let mut d_in = d_out.clone();
    for (g, &x) in d_in.data_mut().iter_mut().zip(input.data()) {
        if x <= S::ZERO {
            *g = S::ZERO;
        }
    }
    d_in
}

/// Numerically stable logistic function: never exponentiates a positive
/// argument, so it cannot overflow for any finite input.
pub fn sigmoid<S: Scalar>(input: &Tensor<S>) -> Tensor<S> {
    input.map(sigmoid_scalar)
}

#[inline]
pub(crate) fn sigmoid_scalar<S: Scalar>(x: S) -> S {
    if x >= S::ZERO {
        S::ONE / (S::ONE + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::ONE + e)
    }
}

/// Backward pass in terms of the forward *output*: dy/dx = y(1-y).
pub fn sigmoid_backward<S: Scalar>(output: &Tensor<S>, d_out: &Tensor<S>) -> Tensor<S> {
    let mut d_in = d_out.clone();
    for (g, &y) in d_in.data_mut().iter_mut().zip(output.data()) {
        *g = *g * y * (S::ONE - y);
    }
    d_in
}
