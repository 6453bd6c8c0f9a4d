//! Max pooling with an argmax record for exact gradient routing.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{idx4, Tensor};

/// Max-pool `input` with a square `window`.
///
/// `pad` rows/columns of implicit negative infinity are added on every side.
/// Returns the pooled tensor and, per output element, the flat index of the
/// winning input element. Ties break to the first element in row-major scan
/// order of the window.
pub fn maxpool2d<S: Scalar>(
    input: &Tensor<S>,
    window: usize,
    stride: usize,
    pad: usize,
) -> Result<(Tensor<S>, Vec<usize>)> {
    let (batch, in_h, in_w, ch) = input.dims4()?;
    if window == 0 || stride == 0 {
        return Err(Error::Shape(
            "maxpool2d window and stride must be >= 1".into(),
        ));
    }
    if pad >= window {
        return Err(Error::Shape(format!(
            "maxpool2d pad {pad} must be smaller than window {window}"
        )));
    }
    if in_h + 2 * pad < window || in_w + 2 * pad < window {
        return Err(Error::Shape(format!(
            "maxpool2d window {window} exceeds padded input extent {}x{}",
            in_h + 2 * pad,
            in_w + 2 * pad
        )));
    }

    let out_h = (in_h + 2 * pad - window) / stride + 1;
    let out_w = (in_w + 2 * pad - window) / stride + 1;
    let x = input.data();
    let mut out = Tensor::zeros([batch, out_h, out_w, ch]);
    let o = out.data_mut();
    let mut argmax = vec![0usize; o.len()];

    for bi in 0..batch {
        for oy in 0..out_h {
            for ox in 0..out_w {
                for c in 0..ch {
                    let mut best = S::NEG_INFINITY;
                    let mut best_idx = usize::MAX;
                    for ky in 0..window {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= in_h as isize {
                            continue;
                        }
                        for kx in 0..window {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= in_w as isize {
                                continue;
                            }
                            let idx = idx4(in_h, in_w, ch, bi, iy as usize, ix as usize, c);
                            let v = x[idx];
                            // Strict comparison keeps the first (row-major)
                            // element on ties.
                            if best_idx == usize::MAX || v > best {
                                best = v;
                                best_idx = idx;
                            }
                        }
                    }
                    debug_assert_ne!(best_idx, usize::MAX);
                    let oi = idx4(out_h, out_w, ch, bi, oy, ox, c);
                    o[oi] = best;
                    argmax[oi] = best_idx;
                }
            }
        }
    }
    Ok((out, argmax))
}

/// Route each output gradient to its recorded winning input element.
pub fn maxpool2d_backward<S: Scalar>(
    input_shape: &[usize],
    argmax: &[usize],
    d_out: &Tensor<S>,
) -> Tensor<S> {
    debug_assert_eq!(argmax.len(), d_out.numel());
    let mut d_in = Tensor::zeros(input_shape.to_vec());
    let dx = d_in.data_mut();
    for (&src, &g) in argmax.iter().zip(d_out.data()) {
        dx[src] += g;
    }
    d_in
}
