//! Nearest-neighbor 2x upsampling.

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::{idx4, Tensor};

/// Replicate every input element into a 2x2 output block.
pub fn upsample2x<S: Scalar>(input: &Tensor<S>) -> Result<Tensor<S>> {
    let (batch, h, w, ch) = input.dims4()?;
    let x = input.data();
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = Tensor::zeros([batch, oh, ow, ch]);
    let o = out.data_mut();
    for bi in 0..batch {
        for oy in 0..oh {
            let iy = oy / 2;
            for ox in 0..ow {
                let ix = ox / 2;
                let src = idx4(h, w, ch, bi, iy, ix, 0);
                let dst = idx4(oh, ow, ch, bi, oy, ox, 0);
                o[dst..dst + ch].copy_from_slice(&x[src..src + ch]);
            }
        }
    }
    Ok(out)
}

/// Sum the four output gradients of each block into the source element.
pub fn upsample2x_backward<S: Scalar>(input_shape: &[usize], d_out: &Tensor<S>) -> Tensor<S> {
    let [batch, h, w, ch] = *input_shape else {
        unreachable!("upsample2x input was rank 4");
    };
    let (oh, ow) = (2 * h, 2 * w);
    let dy = d_out.data();
    let mut d_in = Tensor::zeros(input_shape.to_vec());
    let dx = d_in.data_mut();
    for bi in 0..batch {
        for oy in 0..oh {
            let iy = oy / 2;
            for ox in 0..ow {
                let ix = ox / 2;
                let src = idx4(h, w, ch, bi, iy, ix, 0);
                let dst = idx4(oh, ow, ch, bi, oy, ox, 0);
                for c in 0..ch {
                    dx[src + c] += dy[dst + c];
                }
            }
        }
    }
    d_in
}
