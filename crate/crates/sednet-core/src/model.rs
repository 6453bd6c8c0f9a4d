//! The SEDNet architecture: a shallow encoder-decoder with selective skips.
//!
//! The encoder runs three convolutional blocks (two 3x3 same-padding
//! convolutions with ReLU each) with max-pooling after the first two, then a
//! bottleneck block at quarter resolution. The decoder runs two stages of
//! nearest-neighbor upsampling followed by a 2x2 convolution, concatenating
//! the outputs of encoder blocks 1 and 2 as skips; deeper encoder stages
//! contribute no skip. A 1x1 convolution plus sigmoid emits per-class
//! probabilities.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::ops::Padding;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tape::{Tape, ValueId};
use crate::tensor::Tensor;

/// Architecture hyperparameters.
///
/// The channel schedule is explicit; [`ModelConfig::with_base_filters`]
/// derives the standard doubling ladder from a single base width.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelConfig {
    pub input_height: usize,
    pub input_width: usize,
    pub input_channels: usize,
    pub output_channels: usize,
    /// Encoder block depths, shallow to deep.
    pub encoder: Vec<usize>,
    /// Bottleneck depth; must be twice the deepest encoder block.
    pub bottleneck: usize,
    /// Decoder conv-block depths, deep to shallow.
    pub decoder: Vec<usize>,
    pub pool_window: usize,
    pub pool_stride: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_height: 128,
            input_width: 128,
            input_channels: 1,
            output_channels: 3,
            encoder: vec![32, 64, 128],
            bottleneck: 256,
            decoder: vec![64, 32],
            pool_window: 3,
            pool_stride: 2,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Derive the channel ladder from a base width: encoder `[b, 2b, 4b]`,
    /// bottleneck `8b`, decoder `[2b, b]`.
    pub fn with_base_filters(base: usize) -> Self {
        ModelConfig {
            encoder: vec![base, 2 * base, 4 * base],
            bottleneck: 8 * base,
            decoder: vec![2 * base, base],
            ..ModelConfig::default()
        }
    }

    pub fn with_input_size(mut self, height: usize, width: usize) -> Self {
        self.input_height = height;
        self.input_width = width;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn pool_pad(&self) -> usize {
        (self.pool_window - 1) / 2
    }

    fn pooled(&self, extent: usize) -> usize {
        (extent + 2 * self.pool_pad() - self.pool_window) / self.pool_stride + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_height == 0 || self.input_width == 0 {
            return Err(Error::Config("input extent must be positive".into()));
        }
        if !self.input_height.is_multiple_of(4) || !self.input_width.is_multiple_of(4) {
            return Err(Error::Config(format!(
                "input extent {}x{} must be divisible by 4 (two pooling and two 2x upsampling \
                 stages must restore it exactly)",
                self.input_height, self.input_width
            )));
        }
        if self.input_channels == 0 || self.output_channels == 0 {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        if self.encoder.len() != 3 {
            return Err(Error::Config(format!(
                "encoder schedule must list 3 block depths, got {:?}",
                self.encoder
            )));
        }
        if !self.encoder.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config(format!(
                "encoder schedule must be strictly increasing, got {:?}",
                self.encoder
            )));
        }
        if self.bottleneck != 2 * self.encoder[2] {
            return Err(Error::Config(format!(
                "bottleneck depth {} must be twice the deepest encoder depth {}",
                self.bottleneck, self.encoder[2]
            )));
        }
        if self.decoder.len() != 2 {
            return Err(Error::Config(format!(
                "decoder schedule must list 2 block depths, got {:?}",
                self.decoder
            )));
        }
        if self.pool_window == 0 || self.pool_stride == 0 {
            return Err(Error::Config("pool window and stride must be >= 1".into()));
        }
        // Both pooling stages must land exactly on the half grid so the two
        // 2x upsampling stages restore the input extent.
        for extent in [self.input_height, self.input_width] {
            let once = self.pooled(extent);
            let twice = self.pooled(once);
            if once != extent / 2 || twice != extent / 4 {
                return Err(Error::Config(format!(
                    "pooling (window {}, stride {}) maps {} -> {} -> {}, expected {} -> {} -> {}",
                    self.pool_window,
                    self.pool_stride,
                    extent,
                    once,
                    twice,
                    extent,
                    extent / 2,
                    extent / 4
                )));
            }
        }
        Ok(())
    }
}

/// A learned tensor with its gradient accumulator and freeze flag.
#[derive(Clone, Debug)]
pub struct Parameter<S: Scalar> {
    pub name: String,
    pub value: Tensor<S>,
    pub grad: Tensor<S>,
    pub trainable: bool,
}

impl<S: Scalar> Parameter<S> {
    fn new(name: String, value: Tensor<S>) -> Self {
        let grad = Tensor::zeros(value.shape().to_vec());
        Parameter {
            name,
            value,
            grad,
            trainable: true,
        }
    }
}

/// One row of the architecture descriptor.
#[derive(Clone, Debug)]
pub struct LayerInfo {
    pub name: String,
    /// Per-sample output shape `[H, W, C]`.
    pub output_shape: [usize; 3],
    pub params: usize,
}

/// Human-readable summary of the built network.
#[derive(Clone, Debug)]
pub struct ArchDescriptor {
    pub layers: Vec<LayerInfo>,
    /// `(source layer, destination layer)` concatenation pairs.
    pub skips: Vec<(String, String)>,
    pub total_params: usize,
}

impl core::fmt::Display for ArchDescriptor {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        writeln!(f, "{:<18} {:>14} {:>10}", "layer", "output", "params")?;
        for layer in &self.layers {
            let [h, w, c] = layer.output_shape;
            writeln!(
                f,
                "{:<18} {:>14} {:>10}",
                layer.name,
                format!("{h}x{w}x{c}"),
                layer.params
            )?;
        }
        for (src, dst) in &self.skips {
            writeln!(f, "skip: {src} -> {dst}")?;
        }
        write!(f, "total parameters: {}", self.total_params)
    }
}

struct ConvSpec {
    name: &'static str,
    kh: usize,
    kw: usize,
    cin: usize,
    cout: usize,
}

/// Enumerate every convolution of the network, in execution order.
fn conv_specs(cfg: &ModelConfig) -> Vec<ConvSpec> {
    let [e0, e1, e2] = [cfg.encoder[0], cfg.encoder[1], cfg.encoder[2]];
    let (d0, d1) = (cfg.decoder[0], cfg.decoder[1]);
    let cin = cfg.input_channels;
    vec![
        ConvSpec {
            name: "enc1.conv1",
            kh: 3,
            kw: 3,
            cin,
            cout: e0,
        },
        ConvSpec {
            name: "enc1.conv2",
            kh: 3,
            kw: 3,
            cin: e0,
            cout: e0,
        },
        ConvSpec {
            name: "enc2.conv1",
            kh: 3,
            kw: 3,
            cin: e0,
            cout: e1,
        },
        ConvSpec {
            name: "enc2.conv2",
            kh: 3,
            kw: 3,
            cin: e1,
            cout: e1,
        },
        ConvSpec {
            name: "enc3.conv1",
            kh: 3,
            kw: 3,
            cin: e1,
            cout: e2,
        },
        ConvSpec {
            name: "enc3.conv2",
            kh: 3,
            kw: 3,
            cin: e2,
            cout: e2,
        },
        ConvSpec {
            name: "bottleneck.conv1",
            kh: 3,
            kw: 3,
            cin: e2,
            cout: cfg.bottleneck,
        },
        ConvSpec {
            name: "bottleneck.conv2",
            kh: 3,
            kw: 3,
            cin: cfg.bottleneck,
            cout: cfg.bottleneck,
        },
        ConvSpec {
            name: "dec1.upconv",
            kh: 2,
            kw: 2,
            cin: cfg.bottleneck,
            cout: e2,
        },
        ConvSpec {
            name: "dec1.conv1",
            kh: 3,
            kw: 3,
            cin: e2 + e1,
            cout: d0,
        },
        ConvSpec {
            name: "dec1.conv2",
            kh: 3,
            kw: 3,
            cin: d0,
            cout: d0,
        },
        ConvSpec {
            name: "dec2.upconv",
            kh: 2,
            kw: 2,
            cin: d0,
            cout: d1,
        },
        ConvSpec {
            name: "dec2.conv1",
            kh: 3,
            kw: 3,
            cin: d1 + e0,
            cout: d1,
        },
        ConvSpec {
            name: "dec2.conv2",
            kh: 3,
            kw: 3,
            cin: d1,
            cout: d1,
        },
        ConvSpec {
            name: "head",
            kh: 1,
            kw: 1,
            cin: d1,
            cout: cfg.output_channels,
        },
    ]
}

/// The built network: ordered parameters plus the architecture descriptor.
#[derive(Clone, Debug)]
pub struct Model<S: Scalar> {
    config: ModelConfig,
    params: Vec<Parameter<S>>,
    descriptor: ArchDescriptor,
}

/// Activation names paired with their shapes, in execution order.
pub type ActivationShapes = Vec<(String, Vec<usize>)>;

/// Handles into a tape holding one recorded forward pass.
pub struct TapedForward {
    pub output: ValueId,
    /// One id per parameter, aligned with [`Model::params`].
    pub param_ids: Vec<ValueId>,
    /// Named activations, in execution order.
    pub activations: Vec<(String, ValueId)>,
}

impl<S: Scalar> Model<S> {
    /// Build the network with He-uniform weight init and zero biases, seeded
    /// from the config.
    pub fn build(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::seed_from_u64(config.seed);
        let mut params = Vec::new();
        for spec in conv_specs(&config) {
            let fan_in = (spec.kh * spec.kw * spec.cin) as f64;
            let limit = (6.0 / fan_in).sqrt();
            let n = spec.kh * spec.kw * spec.cin * spec.cout;
            let data: Vec<S> = (0..n)
                .map(|_| S::from_f64(rng.uniform(-limit, limit)))
                .collect();
            let weight = Tensor::new([spec.kh, spec.kw, spec.cin, spec.cout], data)?;
            params.push(Parameter::new(format!("{}.weight", spec.name), weight));
            params.push(Parameter::new(
                format!("{}.bias", spec.name),
                Tensor::zeros([spec.cout]),
            ));
        }
        let descriptor = Self::describe(&config);
        Ok(Model {
            config,
            params,
            descriptor,
        })
    }

    fn describe(cfg: &ModelConfig) -> ArchDescriptor {
        let (h, w) = (cfg.input_height, cfg.input_width);
        let (h2, w2) = (h / 2, w / 2);
        let (h4, w4) = (h / 4, w / 4);
        let [e0, e1, e2] = [cfg.encoder[0], cfg.encoder[1], cfg.encoder[2]];
        let (d0, d1) = (cfg.decoder[0], cfg.decoder[1]);

        let specs = conv_specs(cfg);
        let pcount = |name: &str| -> usize {
            let s = specs.iter().find(|s| s.name == name).unwrap();
            s.kh * s.kw * s.cin * s.cout + s.cout
        };

        let layers = vec![
            LayerInfo {
                name: "enc1.conv1".into(),
                output_shape: [h, w, e0],
                params: pcount("enc1.conv1"),
            },
            LayerInfo {
                name: "enc1.conv2".into(),
                output_shape: [h, w, e0],
                params: pcount("enc1.conv2"),
            },
            LayerInfo {
                name: "pool1".into(),
                output_shape: [h2, w2, e0],
                params: 0,
            },
            LayerInfo {
                name: "enc2.conv1".into(),
                output_shape: [h2, w2, e1],
                params: pcount("enc2.conv1"),
            },
            LayerInfo {
                name: "enc2.conv2".into(),
                output_shape: [h2, w2, e1],
                params: pcount("enc2.conv2"),
            },
            LayerInfo {
                name: "pool2".into(),
                output_shape: [h4, w4, e1],
                params: 0,
            },
            LayerInfo {
                name: "enc3.conv1".into(),
                output_shape: [h4, w4, e2],
                params: pcount("enc3.conv1"),
            },
            LayerInfo {
                name: "enc3.conv2".into(),
                output_shape: [h4, w4, e2],
                params: pcount("enc3.conv2"),
            },
            LayerInfo {
                name: "bottleneck.conv1".into(),
                output_shape: [h4, w4, cfg.bottleneck],
                params: pcount("bottleneck.conv1"),
            },
            LayerInfo {
                name: "bottleneck.conv2".into(),
                output_shape: [h4, w4, cfg.bottleneck],
                params: pcount("bottleneck.conv2"),
            },
            LayerInfo {
                name: "dec1.upsample".into(),
                output_shape: [h2, w2, cfg.bottleneck],
                params: 0,
            },
            LayerInfo {
                name: "dec1.upconv".into(),
                output_shape: [h2, w2, e2],
                params: pcount("dec1.upconv"),
            },
            LayerInfo {
                name: "dec1.concat".into(),
                output_shape: [h2, w2, e2 + e1],
                params: 0,
            },
            LayerInfo {
                name: "dec1.conv1".into(),
                output_shape: [h2, w2, d0],
                params: pcount("dec1.conv1"),
            },
            LayerInfo {
                name: "dec1.conv2".into(),
                output_shape: [h2, w2, d0],
                params: pcount("dec1.conv2"),
            },
            LayerInfo {
                name: "dec2.upsample".into(),
                output_shape: [h, w, d0],
                params: 0,
            },
            LayerInfo {
                name: "dec2.upconv".into(),
                output_shape: [h, w, d1],
                params: pcount("dec2.upconv"),
            },
            LayerInfo {
                name: "dec2.concat".into(),
                output_shape: [h, w, d1 + e0],
                params: 0,
            },
            LayerInfo {
                name: "dec2.conv1".into(),
                output_shape: [h, w, d1],
                params: pcount("dec2.conv1"),
            },
            LayerInfo {
                name: "dec2.conv2".into(),
                output_shape: [h, w, d1],
                params: pcount("dec2.conv2"),
            },
            LayerInfo {
                name: "head".into(),
                output_shape: [h, w, cfg.output_channels],
                params: pcount("head"),
            },
            LayerInfo {
                name: "sigmoid".into(),
                output_shape: [h, w, cfg.output_channels],
                params: 0,
            },
        ];
        let total_params = layers.iter().map(|l| l.params).sum();
        ArchDescriptor {
            layers,
            skips: vec![
                ("enc2.conv2".into(), "dec1.concat".into()),
                ("enc1.conv2".into(), "dec2.concat".into()),
            ],
            total_params,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn descriptor(&self) -> &ArchDescriptor {
        &self.descriptor
    }

    pub fn params(&self) -> &[Parameter<S>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter<S>] {
        &mut self.params
    }

    /// Total element count over all parameters, trainable or not.
    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn trainable_param_count(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.value.numel())
            .sum()
    }

    /// Freeze everything except the 1x1 output head.
    pub fn freeze_for_transfer(&mut self) {
        for p in &mut self.params {
            p.trainable = p.name.starts_with("head.");
        }
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            for g in p.grad.data_mut() {
                *g = S::ZERO;
            }
        }
    }

    fn check_batch(&self, batch: &Tensor<S>) -> Result<()> {
        let (_, h, w, c) = batch.dims4()?;
        let cfg = &self.config;
        if (h, w, c) != (cfg.input_height, cfg.input_width, cfg.input_channels) {
            return Err(Error::Shape(format!(
                "batch shape {:?} does not match configured input {}x{}x{}",
                batch.shape(),
                cfg.input_height,
                cfg.input_width,
                cfg.input_channels
            )));
        }
        Ok(())
    }

    /// Record a forward pass on `tape`, registering every parameter as a
    /// differentiation variable.
    pub fn forward_on_tape(&self, tape: &mut Tape<S>, input: ValueId) -> Result<TapedForward> {
        self.wire(tape, input, true)
    }

    /// Inference without gradient tracking.
    pub fn forward(&self, batch: &Tensor<S>) -> Result<Tensor<S>> {
        let mut tape = Tape::new();
        let input = tape.leaf(batch.clone());
        let tf = self.wire(&mut tape, input, false)?;
        Ok(tape.value(tf.output).clone())
    }

    /// Inference that also reports each named activation's shape.
    pub fn forward_traced(&self, batch: &Tensor<S>) -> Result<(Tensor<S>, ActivationShapes)> {
        let mut tape = Tape::new();
        let input = tape.leaf(batch.clone());
        let tf = self.wire(&mut tape, input, false)?;
        let shapes = tf
            .activations
            .iter()
            .map(|(name, id)| (name.clone(), tape.value(*id).shape().to_vec()))
            .collect();
        Ok((tape.value(tf.output).clone(), shapes))
    }

    fn wire(
        &self,
        tape: &mut Tape<S>,
        input: ValueId,
        differentiable: bool,
    ) -> Result<TapedForward> {
        self.check_batch(tape.value(input))?;
        let param_ids: Vec<ValueId> = self
            .params
            .iter()
            .map(|p| {
                if differentiable {
                    tape.var(p.value.clone())
                } else {
                    tape.leaf(p.value.clone())
                }
            })
            .collect();
        let by_name = |name: &str| -> (ValueId, ValueId) {
            let i = self
                .params
                .iter()
                .position(|p| p.name == format!("{name}.weight"))
                .expect("known conv name");
            (param_ids[i], param_ids[i + 1])
        };

        let pool_pad = self.config.pool_pad();
        let (pw, ps) = (self.config.pool_window, self.config.pool_stride);
        let mut activations = Vec::new();

        let conv_relu = |tape: &mut Tape<S>, x: ValueId, name: &str| -> Result<ValueId> {
            let (w, b) = by_name(name);
            let c = tape.conv2d(x, w, b, 1, Padding::Same)?;
            Ok(tape.relu(c))
        };

        // Encoder.
        let mut x = conv_relu(tape, input, "enc1.conv1")?;
        x = conv_relu(tape, x, "enc1.conv2")?;
        let enc1 = x;
        activations.push(("enc1".into(), enc1));
        x = tape.maxpool2d(x, pw, ps, pool_pad)?;
        activations.push(("pool1".into(), x));

        x = conv_relu(tape, x, "enc2.conv1")?;
        x = conv_relu(tape, x, "enc2.conv2")?;
        let enc2 = x;
        activations.push(("enc2".into(), enc2));
        x = tape.maxpool2d(x, pw, ps, pool_pad)?;
        activations.push(("pool2".into(), x));

        x = conv_relu(tape, x, "enc3.conv1")?;
        x = conv_relu(tape, x, "enc3.conv2")?;
        activations.push(("enc3".into(), x));

        x = conv_relu(tape, x, "bottleneck.conv1")?;
        x = conv_relu(tape, x, "bottleneck.conv2")?;
        activations.push(("bottleneck".into(), x));

        // Decoder stage 1: upsample, 2x2 conv, skip from encoder block 2.
        x = tape.upsample2x(x)?;
        x = conv_relu(tape, x, "dec1.upconv")?;
        x = tape.concat_channels(x, enc2)?;
        x = conv_relu(tape, x, "dec1.conv1")?;
        x = conv_relu(tape, x, "dec1.conv2")?;
        activations.push(("dec1".into(), x));

        // Decoder stage 2: skip from encoder block 1.
        x = tape.upsample2x(x)?;
        x = conv_relu(tape, x, "dec2.upconv")?;
        x = tape.concat_channels(x, enc1)?;
        x = conv_relu(tape, x, "dec2.conv1")?;
        x = conv_relu(tape, x, "dec2.conv2")?;
        activations.push(("dec2".into(), x));

        // 1x1 head plus sigmoid.
        let (hw, hb) = by_name("head");
        x = tape.conv2d(x, hw, hb, 1, Padding::Same)?;
        let output = tape.sigmoid(x);
        activations.push(("output".into(), output));

        Ok(TapedForward {
            output,
            param_ids,
            activations,
        })
    }

    /// Run reverse-mode accumulation and add the results into each
    /// parameter's gradient buffer. Repeated calls accumulate; call
    /// [`Model::zero_grads`] between optimizer steps.
    pub fn backward_and_accumulate(
        &mut self,
        tape: &Tape<S>,
        loss: ValueId,
        taped: &TapedForward,
    ) -> Result<()> {
        let grads = tape.backward(loss)?;
        for (param, id) in self.params.iter_mut().zip(&taped.param_ids) {
            if let Some(g) = grads.get(*id) {
                for (dst, &src) in param.grad.data_mut().iter_mut().zip(g.data()) {
                    *dst += src;
                }
            }
        }
        Ok(())
    }
}
