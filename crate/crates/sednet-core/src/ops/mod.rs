//! Forward and backward kernels for every operation the network uses.
//!
//! These are plain functions over [`crate::Tensor`] buffers; the tape in
//! [`crate::tape`] records which kernel produced which value and replays the
//! matching backward kernel during reverse-mode accumulation.

mod activation;
mod conv;
mod elementwise;
mod pool;
mod resample;

pub use activation::{relu, relu_backward, sigmoid, sigmoid_backward};
pub use conv::{conv2d, conv2d_backward, Conv2dGrads, Padding};
pub use elementwise::{
    concat_channels, concat_channels_backward, slice_channel, slice_channel_backward,
};
pub use pool::{maxpool2d, maxpool2d_backward};
pub use resample::{upsample2x, upsample2x_backward};

#[allow(unused_imports)]
pub(crate) use conv::conv_geom;
