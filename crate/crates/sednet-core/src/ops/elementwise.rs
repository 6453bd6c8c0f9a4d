//! Channel concatenation and channel slicing.

use alloc::format;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Concatenate two `[B,H,W,C]` tensors along the channel axis.
pub fn concat_channels<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    let (ba, ha, wa, ca) = a.dims4()?;
    let (bb, hb, wb, cb) = b.dims4()?;
    if (ba, ha, wa) != (bb, hb, wb) {
        return Err(Error::Shape(format!(
            "concat_channels spatial mismatch: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut out = Tensor::zeros([ba, ha, wa, ca + cb]);
    let o = out.data_mut();
    let pixels = ba * ha * wa;
    for p in 0..pixels {
        let dst = p * (ca + cb);
        o[dst..dst + ca].copy_from_slice(&a.data()[p * ca..(p + 1) * ca]);
        o[dst + ca..dst + ca + cb].copy_from_slice(&b.data()[p * cb..(p + 1) * cb]);
    }
    Ok(out)
}

/// Split the output gradient back into the two channel ranges.
pub fn concat_channels_backward<S: Scalar>(
    ca: usize,
    cb: usize,
    d_out: &Tensor<S>,
) -> (Tensor<S>, Tensor<S>) {
    let (b, h, w, c) = d_out.dims4().expect("concat output is rank 4");
    debug_assert_eq!(c, ca + cb);
    let mut d_a = Tensor::zeros([b, h, w, ca]);
    let mut d_b = Tensor::zeros([b, h, w, cb]);
    let pixels = b * h * w;
    let dy = d_out.data();
    for p in 0..pixels {
        let src = p * c;
        d_a.data_mut()[p * ca..(p + 1) * ca].copy_from_slice(&dy[src..src + ca]);
        d_b.data_mut()[p * cb..(p + 1) * cb].copy_from_slice(&dy[src + ca..src + ca + cb]);
    }
    (d_a, d_b)
}

/// Extract channel `c` as a `[B,H,W,1]` tensor.
pub fn slice_channel<S: Scalar>(input: &Tensor<S>, channel: usize) -> Result<Tensor<S>> {
    let (b, h, w, c) = input.dims4()?;
    if channel >= c {
        return Err(Error::Shape(format!(
            "channel {channel} out of range for shape {:?}",
            input.shape()
        )));
    }
    let pixels = b * h * w;
    let mut out = Tensor::zeros([b, h, w, 1]);
    let o = out.data_mut();
    let x = input.data();
    for p in 0..pixels {
        o[p] = x[p * c + channel];
    }
    Ok(out)
}

/// Scatter a channel-slice gradient back into the source layout.
pub fn slice_channel_backward<S: Scalar>(
    input_shape: &[usize],
    channel: usize,
    d_out: &Tensor<S>,
) -> Tensor<S> {
    let [b, h, w, c] = *input_shape else {
        unreachable!("slice_channel input was rank 4");
    };
    let mut d_in = Tensor::zeros([b, h, w, c]);
    let dx = d_in.data_mut();
    for (p, &g) in d_out.data().iter().enumerate() {
        dx[p * c + channel] += g;
    }
    d_in
}
