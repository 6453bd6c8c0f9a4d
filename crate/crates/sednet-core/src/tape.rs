//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation executes eagerly and records what produced its output.
//! [`Tape::backward`] replays the records in exact reverse execution order,
//! accumulating adjoints into a gradient arena indexed by [`ValueId`].
//!
//! The tape does not know about model parameters; callers (see
//! [`crate::model::Model`]) register parameter values with [`Tape::var`] and
//! read their gradients back after `backward`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::ops;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ValueId(pub(crate) usize);

enum Node<S: Scalar> {
    /// Input or registered variable; nothing to propagate into.
    Leaf,
    Conv2d {
        input: ValueId,
        weight: ValueId,
        bias: ValueId,
        stride: usize,
        padding: ops::Padding,
    },
    MaxPool2d {
        input: ValueId,
        window: usize,
        stride: usize,
        pad: usize,
        argmax: Vec<usize>,
    },
    Upsample2x {
        input: ValueId,
    },
    Relu {
        input: ValueId,
    },
    Sigmoid {
        input: ValueId,
    },
    ConcatChannels {
        a: ValueId,
        b: ValueId,
        ca: usize,
        cb: usize,
    },
    SliceChannel {
        input: ValueId,
        channel: usize,
    },
    Add {
        a: ValueId,
        b: ValueId,
    },
    Sub {
        a: ValueId,
        b: ValueId,
    },
    Mul {
        a: ValueId,
        b: ValueId,
    },
    Div {
        a: ValueId,
        b: ValueId,
    },
    Scale {
        input: ValueId,
        factor: S,
    },
    Offset {
        input: ValueId,
    },
    Neg {
        input: ValueId,
    },
    Ln {
        input: ValueId,
    },
    Clamp {
        input: ValueId,
        lo: S,
        hi: S,
    },
    Sum {
        input: ValueId,
    },
}

/// Distances from the nearest non-differentiable point, per kink source;
/// infinite when the tape holds no such node.
#[derive(Clone, Copy, Debug)]
pub struct KinkMargins {
    pub relu: f64,
    pub pool: f64,
}

impl KinkMargins {
    pub fn min(&self) -> f64 {
        self.relu.min(self.pool)
    }
}

/// Gradient arena produced by [`Tape::backward`].
pub struct Gradients<S: Scalar> {
    grads: Vec<Option<Tensor<S>>>,
}

impl<S: Scalar> Gradients<S> {
    /// Gradient of the loss w.r.t. the given value, if it was reachable.
    pub fn get(&self, id: ValueId) -> Option<&Tensor<S>> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }
}

/// Ordered record of executed operations plus their output values.
pub struct Tape<S: Scalar> {
    nodes: Vec<Node<S>>,
    values: Vec<Tensor<S>>,
    needs_grad: Vec<bool>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            values: Vec::new(),
            needs_grad: Vec::new(),
        }
    }

    fn push(&mut self, node: Node<S>, value: Tensor<S>, needs_grad: bool) -> ValueId {
        self.nodes.push(node);
        self.values.push(value);
        self.needs_grad.push(needs_grad);
        ValueId(self.nodes.len() - 1)
    }

    /// Record an input value; no gradient is tracked for it.
    pub fn leaf(&mut self, value: Tensor<S>) -> ValueId {
        self.push(Node::Leaf, value, false)
    }

    /// Record a differentiation variable (a parameter or a checked input).
    pub fn var(&mut self, value: Tensor<S>) -> ValueId {
        self.push(Node::Leaf, value, true)
    }

    pub fn value(&self, id: ValueId) -> &Tensor<S> {
        &self.values[id.0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn wants(&self, id: ValueId) -> bool {
        self.needs_grad[id.0]
    }

    pub fn conv2d(
        &mut self,
        input: ValueId,
        weight: ValueId,
        bias: ValueId,
        stride: usize,
        padding: ops::Padding,
    ) -> Result<ValueId> {
        let out = ops::conv2d(
            self.value(input),
            self.value(weight),
            self.value(bias),
            stride,
            padding,
        )?;
        let needs = self.wants(input) || self.wants(weight) || self.wants(bias);
        Ok(self.push(
            Node::Conv2d {
                input,
                weight,
                bias,
                stride,
                padding,
            },
            out,
            needs,
        ))
    }

    pub fn maxpool2d(
        &mut self,
        input: ValueId,
        window: usize,
        stride: usize,
        pad: usize,
    ) -> Result<ValueId> {
        let (out, argmax) = ops::maxpool2d(self.value(input), window, stride, pad)?;
        let needs = self.wants(input);
        Ok(self.push(
            Node::MaxPool2d {
                input,
                window,
                stride,
                pad,
                argmax,
            },
            out,
            needs,
        ))
    }

    pub fn upsample2x(&mut self, input: ValueId) -> Result<ValueId> {
        let out = ops::upsample2x(self.value(input))?;
        let needs = self.wants(input);
        Ok(self.push(Node::Upsample2x { input }, out, needs))
    }

    pub fn relu(&mut self, input: ValueId) -> ValueId {
        let out = ops::relu(self.value(input));
        let needs = self.wants(input);
        self.push(Node::Relu { input }, out, needs)
    }

    pub fn sigmoid(&mut self, input: ValueId) -> ValueId {
        let out = ops::sigmoid(self.value(input));
        let needs = self.wants(input);
        self.push(Node::Sigmoid { input }, out, needs)
    }

    pub fn concat_channels(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let out = ops::concat_channels(self.value(a), self.value(b))?;
        let ca = *self.value(a).shape().last().unwrap();
        let cb = *self.value(b).shape().last().unwrap();
        let needs = self.wants(a) || self.wants(b);
        Ok(self.push(Node::ConcatChannels { a, b, ca, cb }, out, needs))
    }

    pub fn slice_channel(&mut self, input: ValueId, channel: usize) -> Result<ValueId> {
        let out = ops::slice_channel(self.value(input), channel)?;
        let needs = self.wants(input);
        Ok(self.push(Node::SliceChannel { input, channel }, out, needs))
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let out = self.broadcast_zip(a, b, |x, y| x + y)?;
        let needs = self.wants(a) || self.wants(b);
        Ok(self.push(Node::Add { a, b }, out, needs))
    }

    pub fn sub(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let out = self.broadcast_zip(a, b, |x, y| x - y)?;
        let needs = self.wants(a) || self.wants(b);
        Ok(self.push(Node::Sub { a, b }, out, needs))
    }

    pub fn mul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let out = self.broadcast_zip(a, b, |x, y| x * y)?;
        let needs = self.wants(a) || self.wants(b);
        Ok(self.push(Node::Mul { a, b }, out, needs))
    }

    pub fn div(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let out = self.broadcast_zip(a, b, |x, y| x / y)?;
        let needs = self.wants(a) || self.wants(b);
        Ok(self.push(Node::Div { a, b }, out, needs))
    }

    pub fn scale(&mut self, input: ValueId, factor: S) -> ValueId {
        let out = self.value(input).map(|x| x * factor);
        let needs = self.wants(input);
        self.push(Node::Scale { input, factor }, out, needs)
    }

    /// `x + c` elementwise.
    pub fn offset(&mut self, input: ValueId, amount: S) -> ValueId {
        let out = self.value(input).map(|x| x + amount);
        let needs = self.wants(input);
        self.push(Node::Offset { input }, out, needs)
    }

    pub fn neg(&mut self, input: ValueId) -> ValueId {
        let out = self.value(input).map(|x| -x);
        let needs = self.wants(input);
        self.push(Node::Neg { input }, out, needs)
    }

    pub fn ln(&mut self, input: ValueId) -> ValueId {
        let out = self.value(input).map(|x| x.ln());
        let needs = self.wants(input);
        self.push(Node::Ln { input }, out, needs)
    }

    pub fn clamp(&mut self, input: ValueId, lo: S, hi: S) -> ValueId {
        let out = self.value(input).map(|x| x.clamp(lo, hi));
        let needs = self.wants(input);
        self.push(Node::Clamp { input, lo, hi }, out, needs)
    }

    /// Reduce to a single-element tensor.
    pub fn sum(&mut self, input: ValueId) -> ValueId {
        let out = Tensor::scalar(self.value(input).sum());
        let needs = self.wants(input);
        self.push(Node::Sum { input }, out, needs)
    }

    fn broadcast_zip(&self, a: ValueId, b: ValueId, f: impl Fn(S, S) -> S) -> Result<Tensor<S>> {
        let ta = self.value(a);
        let tb = self.value(b);
        if ta.shape() == tb.shape() {
            let data = ta
                .data()
                .iter()
                .zip(tb.data())
                .map(|(&x, &y)| f(x, y))
                .collect();
            Tensor::new(ta.shape().to_vec(), data)
        } else if tb.is_scalar() {
            let y = tb.item();
            Ok(ta.map(|x| f(x, y)))
        } else if ta.is_scalar() {
            let x = ta.item();
            Ok(tb.map(|y| f(x, y)))
        } else {
            Err(Error::Shape(format!(
                "elementwise op requires equal shapes or a scalar operand, got {:?} vs {:?}",
                ta.shape(),
                tb.shape()
            )))
        }
    }

    /// Distance of this tape's forward pass from the nearest gradient kink:
    /// the smallest `|x|` feeding any ReLU, and the smallest winner/runner-up
    /// gap inside any max-pool window.
    ///
    /// Finite-difference checks are only meaningful at points whose margins
    /// comfortably exceed the probe step; callers use this to screen sampled
    /// points.
    pub fn kink_margins(&self) -> KinkMargins {
        let mut relu = f64::INFINITY;
        let mut pool = f64::INFINITY;
        for node in &self.nodes {
            match node {
                Node::Relu { input } => {
                    for &x in self.value(*input).data() {
                        relu = relu.min(x.to_f64().abs());
                    }
                }
                Node::MaxPool2d {
                    input,
                    window,
                    stride,
                    pad,
                    argmax,
                } => {
                    let t = self.value(*input);
                    let (_, in_h, in_w, ch) = t.dims4().expect("pool input is rank 4");
                    let x = t.data();
                    let out_h = (in_h + 2 * pad - window) / stride + 1;
                    let out_w = (in_w + 2 * pad - window) / stride + 1;
                    let batch = t.numel() / (in_h * in_w * ch);
                    for bi in 0..batch {
                        for oy in 0..out_h {
                            for ox in 0..out_w {
                                for c in 0..ch {
                                    let oi = ((bi * out_h + oy) * out_w + ox) * ch + c;
                                    let winner = x[argmax[oi]].to_f64();
                                    for ky in 0..*window {
                                        let iy = (oy * stride + ky) as isize - *pad as isize;
                                        if iy < 0 || iy >= in_h as isize {
                                            continue;
                                        }
                                        for kx in 0..*window {
                                            let ix = (ox * stride + kx) as isize - *pad as isize;
                                            if ix < 0 || ix >= in_w as isize {
                                                continue;
                                            }
                                            let ii = ((bi * in_h + iy as usize) * in_w
                                                + ix as usize)
                                                * ch
                                                + c;
                                            if ii != argmax[oi] {
                                                pool = pool.min(winner - x[ii].to_f64());
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        KinkMargins { relu, pool }
    }

    /// Reverse-mode accumulation from a scalar `loss` value.
    ///
    /// Returns one gradient per reachable value that was marked as needing a
    /// gradient. Values recorded after `loss` cannot influence it and are
    /// ignored.
    pub fn backward(&self, loss: ValueId) -> Result<Gradients<S>> {
        let loss_value = self.value(loss);
        if !loss_value.is_scalar() {
            return Err(Error::Shape(format!(
                "backward requires a scalar loss, got shape {:?}",
                loss_value.shape()
            )));
        }

        let mut grads: Vec<Option<Tensor<S>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(loss_value.shape().to_vec(), S::ONE));

        for i in (0..=loss.0).rev() {
            if !self.needs_grad[i] {
                continue;
            }
            // Inputs always precede their consumer, so the arena splits
            // cleanly at `i`.
            let (earlier, rest) = grads.split_at_mut(i);
            let Some(g) = rest[0].as_ref() else {
                continue;
            };
            match &self.nodes[i] {
                Node::Leaf => {}
                Node::Conv2d {
                    input,
                    weight,
                    bias,
                    stride,
                    padding,
                } => {
                    let parts = ops::conv2d_backward(
                        self.value(*input),
                        self.value(*weight),
                        g,
                        *stride,
                        *padding,
                    )?;
                    if self.wants(*input) {
                        accumulate(&mut earlier[input.0], parts.d_input);
                    }
                    if self.wants(*weight) {
                        accumulate(&mut earlier[weight.0], parts.d_weight);
                    }
                    if self.wants(*bias) {
                        accumulate(&mut earlier[bias.0], parts.d_bias);
                    }
                }
                Node::MaxPool2d { input, argmax, .. } => {
                    let d = ops::maxpool2d_backward(self.value(*input).shape(), argmax, g);
                    accumulate(&mut earlier[input.0], d);
                }
                Node::Upsample2x { input } => {
                    let d = ops::upsample2x_backward(self.value(*input).shape(), g);
                    accumulate(&mut earlier[input.0], d);
                }
                Node::Relu { input } => {
                    let d = ops::relu_backward(self.value(*input), g);
                    accumulate(&mut earlier[input.0], d);
                }
                Node::Sigmoid { input } => {
                    let d = ops::sigmoid_backward(&self.values[i], g);
                    accumulate(&mut earlier[input.0], d);
                }
                Node::ConcatChannels { a, b, ca, cb } => {
                    let (da, db) = ops::concat_channels_backward(*ca, *cb, g);
                    if self.wants(*a) {
                        accumulate(&mut earlier[a.0], da);
                    }
                    if self.wants(*b) {
                        accumulate(&mut earlier[b.0], db);
                    }
                }
                Node::SliceChannel { input, channel } => {
                    let d = ops::slice_channel_backward(self.value(*input).shape(), *channel, g);
                    accumulate(&mut earlier[input.0], d);
                }
                Node::Add { a, b } => {
                    if self.wants(*a) {
                        accumulate(
                            &mut earlier[a.0],
                            reduce_to(self.value(*a).shape(), g.clone()),
                        );
                    }
                    if self.wants(*b) {
                        accumulate(
                            &mut earlier[b.0],
                            reduce_to(self.value(*b).shape(), g.clone()),
                        );
                    }
                }
                Node::Sub { a, b } => {
                    if self.wants(*a) {
                        accumulate(
                            &mut earlier[a.0],
                            reduce_to(self.value(*a).shape(), g.clone()),
                        );
                    }
                    if self.wants(*b) {
                        let neg = g.map(|x| -x);
                        accumulate(&mut earlier[b.0], reduce_to(self.value(*b).shape(), neg));
                    }
                }
                Node::Mul { a, b } => {
                    if self.wants(*a) {
                        let d = broadcast_product(g, self.value(*b));
                        accumulate(&mut earlier[a.0], reduce_to(self.value(*a).shape(), d));
                    }
                    if self.wants(*b) {
                        let d = broadcast_product(g, self.value(*a));
                        accumulate(&mut earlier[b.0], reduce_to(self.value(*b).shape(), d));
                    }
                }
                Node::Div { a, b } => {
                    let tb = self.value(*b);
                    if self.wants(*a) {
                        let d = broadcast_zip_free(g, tb, |gv, bv| gv / bv);
                        accumulate(&mut earlier[a.0], reduce_to(self.value(*a).shape(), d));
                    }
                    if self.wants(*b) {
                        let ta = self.value(*a);
                        // d(a/b)/db = -a / b^2
                        let ratio = broadcast_zip_free(ta, tb, |av, bv| -av / (bv * bv));
                        let d = broadcast_product(g, &ratio);
                        accumulate(&mut earlier[b.0], reduce_to(tb.shape(), d));
                    }
                }
                Node::Scale { input, factor } => {
                    let f = *factor;
                    accumulate(&mut earlier[input.0], g.map(|x| x * f));
                }
                Node::Offset { input } => {
                    accumulate(&mut earlier[input.0], g.clone());
                }
                Node::Neg { input } => {
                    accumulate(&mut earlier[input.0], g.map(|x| -x));
                }
                Node::Ln { input } => {
                    let x = self.value(*input);
                    let mut d = g.clone();
                    for (dv, &xv) in d.data_mut().iter_mut().zip(x.data()) {
                        *dv = *dv / xv;
                    }
                    accumulate(&mut earlier[input.0], d);
                }
                Node::Clamp { input, lo, hi } => {
                    let x = self.value(*input);
                    let mut d = g.clone();
                    for (dv, &xv) in d.data_mut().iter_mut().zip(x.data()) {
                        if !(xv > *lo && xv < *hi) {
                            *dv = S::ZERO;
                        }
                    }
                    accumulate(&mut earlier[input.0], d);
                }
                Node::Sum { input } => {
                    let gv = g.item();
                    let shape = self.value(*input).shape().to_vec();
                    accumulate(&mut earlier[input.0], Tensor::full(shape, gv));
                }
            }
        }

        Ok(Gradients { grads })
    }
}

fn accumulate<S: Scalar>(slot: &mut Option<Tensor<S>>, delta: Tensor<S>) {
    match slot {
        None => *slot = Some(delta),
        Some(existing) => {
            debug_assert_eq!(existing.shape(), delta.shape());
            for (dst, &src) in existing.data_mut().iter_mut().zip(delta.data()) {
                *dst += src;
            }
        }
    }
}

/// Collapse a gradient onto `shape` (identity, or total sum for a scalar).
fn reduce_to<S: Scalar>(shape: &[usize], grad: Tensor<S>) -> Tensor<S> {
    if grad.shape() == shape {
        grad
    } else {
        debug_assert_eq!(shape.iter().product::<usize>(), 1);
        let mut out = Tensor::zeros(shape.to_vec());
        out.data_mut()[0] = grad.sum();
        out
    }
}

fn broadcast_product<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Tensor<S> {
    broadcast_zip_free(a, b, |x, y| x * y)
}

fn broadcast_zip_free<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>, f: impl Fn(S, S) -> S) -> Tensor<S> {
    if a.shape() == b.shape() {
        let data = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(a.shape().to_vec(), data).expect("matching shapes")
    } else if b.is_scalar() {
        let y = b.item();
        a.map(|x| f(x, y))
    } else {
        debug_assert!(a.is_scalar());
        let x = a.item();
        b.map(|y| f(x, y))
    }
}
