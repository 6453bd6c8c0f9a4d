//! 2D convolution (cross-correlation) with `same`/`valid` padding.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{idx4, Tensor};

/// Spatial padding policy.
///
/// `Same` with stride 1 preserves the spatial extent; even kernels pad on the
/// bottom/right only.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    Same,
    Valid,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub cin: usize,
    pub kh: usize,
    pub kw: usize,
    pub cout: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub out_h: usize,
    pub out_w: usize,
}

pub(crate) fn conv_geom(
    input_shape: &[usize],
    weight_shape: &[usize],
    bias_shape: &[usize],
    stride: usize,
    padding: Padding,
) -> Result<ConvGeom> {
    let [batch, in_h, in_w, cin] = *input_shape else {
        return Err(Error::Shape(format!(
            "conv2d input must be [B,H,W,Cin], got {input_shape:?}"
        )));
    };
    let [kh, kw, wcin, cout] = *weight_shape else {
        return Err(Error::Shape(format!(
            "conv2d weight must be [kh,kw,Cin,Cout], got {weight_shape:?}"
        )));
    };
    if wcin != cin {
        return Err(Error::Shape(format!(
            "conv2d channel mismatch: input {input_shape:?} has {cin} channels but weight \
             {weight_shape:?} expects {wcin}"
        )));
    }
    if bias_shape != [cout] {
        return Err(Error::Shape(format!(
            "conv2d bias must be [{cout}], got {bias_shape:?}"
        )));
    }
    if stride == 0 {
        return Err(Error::Shape("conv2d stride must be >= 1".into()));
    }

    let (out_h, pad_top) = padded_extent(in_h, kh, stride, padding)?;
    let (out_w, pad_left) = padded_extent(in_w, kw, stride, padding)?;

    Ok(ConvGeom {
        batch,
        in_h,
        in_w,
        cin,
        kh,
        kw,
        cout,
        stride,
        pad_top,
        pad_left,
        out_h,
        out_w,
    })
}

fn padded_extent(
    extent: usize,
    k: usize,
    stride: usize,
    padding: Padding,
) -> Result<(usize, usize)> {
    match padding {
        Padding::Valid => {
            if extent < k {
                return Err(Error::Shape(format!(
                    "valid conv2d needs input extent >= kernel, got {extent} < {k}"
                )));
            }
            Ok(((extent - k) / stride + 1, 0))
        }
        Padding::Same => {
            let out = extent.div_ceil(stride);
            let needed = (out - 1) * stride + k;
            let total_pad = needed.saturating_sub(extent);
            // Floor division puts the extra pixel of an even kernel on the
            // bottom/right side.
            Ok((out, total_pad / 2))
        }
    }
}

/// Cross-correlation of `input` with `weight` plus per-channel `bias`.
pub fn conv2d<S: Scalar>(
    input: &Tensor<S>,
    weight: &Tensor<S>,
    bias: &Tensor<S>,
    stride: usize,
    padding: Padding,
) -> Result<Tensor<S>> {
    let g = conv_geom(input.shape(), weight.shape(), bias.shape(), stride, padding)?;
    let x = input.data();
    let w = weight.data();
    let b = bias.data();

    let mut out = Tensor::zeros([g.batch, g.out_h, g.out_w, g.cout]);
    let o = out.data_mut();

    for bi in 0..g.batch {
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let out_base = idx4(g.out_h, g.out_w, g.cout, bi, oy, ox, 0);
                o[out_base..out_base + g.cout].copy_from_slice(b);
                for ky in 0..g.kh {
                    let iy = (oy * g.stride + ky) as isize - g.pad_top as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    for kx in 0..g.kw {
                        let ix = (ox * g.stride + kx) as isize - g.pad_left as isize;
                        if ix < 0 || ix >= g.in_w as isize {
                            continue;
                        }
                        let in_base = idx4(g.in_h, g.in_w, g.cin, bi, iy as usize, ix as usize, 0);
                        let w_base = ((ky * g.kw + kx) * g.cin) * g.cout;
                        for ci in 0..g.cin {
                            let a = x[in_base + ci];
                            let ws = &w[w_base + ci * g.cout..w_base + (ci + 1) * g.cout];
                            let os = &mut o[out_base..out_base + g.cout];
                            for (dst, &wv) in os.iter_mut().zip(ws) {
                                *dst += a * wv;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of [`conv2d`] with respect to all three arguments.
pub struct Conv2dGrads<S: Scalar> {
    pub d_input: Tensor<S>,
    pub d_weight: Tensor<S>,
    pub d_bias: Tensor<S>,
}

pub fn conv2d_backward<S: Scalar>(
    input: &Tensor<S>,
    weight: &Tensor<S>,
    d_out: &Tensor<S>,
    stride: usize,
    padding: Padding,
) -> Result<Conv2dGrads<S>> {
    let cout = *weight.shape().last().expect("conv weight rank 4");
    let bias_shape = [cout];
    let g = conv_geom(input.shape(), weight.shape(), &bias_shape, stride, padding)?;
    debug_assert_eq!(d_out.shape(), [g.batch, g.out_h, g.out_w, g.cout]);

    let x = input.data();
    let w = weight.data();
    let dy = d_out.data();

    let mut d_input = Tensor::zeros(input.shape().to_vec());
    let mut d_weight = Tensor::zeros(weight.shape().to_vec());
    let mut d_bias = Tensor::zeros(Vec::from(bias_shape));
    let dx = d_input.data_mut();
    let dw = d_weight.data_mut();
    let db = d_bias.data_mut();

    for bi in 0..g.batch {
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let out_base = idx4(g.out_h, g.out_w, g.cout, bi, oy, ox, 0);
                let dys = &dy[out_base..out_base + g.cout];
                for (dst, &dv) in db.iter_mut().zip(dys) {
                    *dst += dv;
                }
                for ky in 0..g.kh {
                    let iy = (oy * g.stride + ky) as isize - g.pad_top as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    for kx in 0..g.kw {
                        let ix = (ox * g.stride + kx) as isize - g.pad_left as isize;
                        if ix < 0 || ix >= g.in_w as isize {
                            continue;
                        }
                        let in_base = idx4(g.in_h, g.in_w, g.cin, bi, iy as usize, ix as usize, 0);
                        let w_base = ((ky * g.kw + kx) * g.cin) * g.cout;
                        for ci in 0..g.cin {
                            let a = x[in_base + ci];
                            let ws = &w[w_base + ci * g.cout..w_base + (ci + 1) * g.cout];
                            let dws = &mut dw[w_base + ci * g.cout..w_base + (ci + 1) * g.cout];
                            let mut acc = S::ZERO;
                            for ((&wv, dwv), &dv) in ws.iter().zip(dws.iter_mut()).zip(dys) {
                                acc += wv * dv;
                                *dwv += a * dv;
                            }
                            dx[in_base + ci] += acc;
                        }
                    }
                }
            }
        }
    }

    Ok(Conv2dGrads {
        d_input,
        d_weight,
        d_bias,
    })
}
