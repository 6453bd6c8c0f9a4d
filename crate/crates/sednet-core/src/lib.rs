//! Core engine for the SEDNet shallow encoder-decoder segmentation network.
//!
//! Everything numeric lives here: a dense tensor type with reverse-mode
//! automatic differentiation over exactly the operations the network needs,
//! the architecture builder, the BCE / soft-dice loss family, Dice and
//! Hausdorff evaluation metrics, the three-phase slice preprocessor, and the
//! Adam + plateau-schedule training loop.
//!
//! The crate is `no_std`-compatible (with `alloc`); file formats, dataset
//! generation and the command-line harness live in the companion `sednet-io`
//! crate.
//!
//! # Precision
//!
//! Training runs in `f32`. All operations are generic over [`Scalar`] so the
//! gradient-check harness can drive the identical code paths in `f64`, where
//! central finite differences are meaningful.
//!
//! # Determinism
//!
//! There is no global state and no platform RNG: every randomized choice
//! (weight init, shuffles, scan orders) flows from an explicit [`rng::Rng`]
//! seed, so a fixed seed reproduces a run bit-for-bit.
//!
//! # Example
//!
//! One gradient step on a small network:
//!
//! ```
//! use sednet_core::objectives::loss_on_tape;
//! use sednet_core::{LossConfig, Model, ModelConfig, Tape, Tensor};
//!
//! # fn main() -> sednet_core::Result<()> {
//! let config = ModelConfig {
//!     input_height: 8,
//!     input_width: 8,
//!     ..ModelConfig::with_base_filters(4)
//! };
//! let mut model = Model::<f32>::build(config)?;
//!
//! let batch = Tensor::full([2, 8, 8, 1], 0.4f32);
//! let target = Tensor::zeros([2, 8, 8, 3]);
//!
//! let mut tape = Tape::new();
//! let input = tape.leaf(batch);
//! let taped = model.forward_on_tape(&mut tape, input)?;
//! let labels = tape.leaf(target);
//! let loss = loss_on_tape(&mut tape, taped.output, labels, &LossConfig::default())?;
//!
//! model.zero_grads();
//! model.backward_and_accumulate(&tape, loss, &taped)?;
//! assert!(model.params().iter().any(|p| p.grad.data().iter().any(|&g| g != 0.0)));
//! # Ok(())
//! # }
//! ```

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

#[cfg(feature = "std")]
extern crate std;

#[cfg(not(any(feature = "std", feature = "libm")))]
compile_error!("sednet-core requires either the `std` or the `libm` feature");

pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod objectives;
pub mod ops;
pub mod optim;
pub mod preprocess;
pub mod rng;
pub mod scalar;
pub mod tape;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use model::{Model, ModelConfig};
pub use objectives::{LossConfig, LossVariant};

pub use scalar::Scalar;
pub use tape::{Tape, ValueId};
pub use tensor::Tensor;
pub use trainer::{EpochReport, TrainConfig};
