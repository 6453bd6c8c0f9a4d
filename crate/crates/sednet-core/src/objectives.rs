//! Segmentation objectives: binary cross-entropy, soft dice, and their
//! weighted combinations over three-channel probability maps.
//!
//! All losses are built from taped operations so gradients flow through
//! training; [`loss_value`] evaluates the same graph without tracking.
//!
//! Sign conventions: BCE is the standard positive loss (smaller is better);
//! soft dice returns the negated dice ratio in `[-1, 0]`, so every combined
//! objective decreases as the prediction approaches the target.

use alloc::format;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{Tape, ValueId};
use crate::tensor::Tensor;

/// Which objective to optimize.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum LossVariant {
    /// Binary cross-entropy alone.
    Bce,
    /// BCE plus dice on hard-thresholded predictions (the dice term is a
    /// constant for gradient purposes).
    Bced,
    /// Unweighted BCE + soft dice sum.
    Bcesd,
    /// Equally weighted combination, 0.5/0.5.
    WbcesdE,
    /// Priority-weighted combination with more weight on BCE.
    WbcesdP,
}

impl LossVariant {
    pub const ALL: [LossVariant; 5] = [
        LossVariant::Bce,
        LossVariant::Bced,
        LossVariant::Bcesd,
        LossVariant::WbcesdE,
        LossVariant::WbcesdP,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LossVariant::Bce => "bce",
            LossVariant::Bced => "bced",
            LossVariant::Bcesd => "bcesd",
            LossVariant::WbcesdE => "wbcesd-e",
            LossVariant::WbcesdP => "wbcesd-p",
        }
    }
}

impl core::fmt::Display for LossVariant {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bce" => Ok(LossVariant::Bce),
            "bced" => Ok(LossVariant::Bced),
            "bcesd" => Ok(LossVariant::Bcesd),
            "wbcesd-e" => Ok(LossVariant::WbcesdE),
            "wbcesd-p" => Ok(LossVariant::WbcesdP),
            other => Err(Error::Config(format!(
                "unknown loss variant {other:?}; expected one of bce, bced, bcesd, wbcesd-e, wbcesd-p"
            ))),
        }
    }
}

/// Loss selection plus numeric guards and combination weights.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossConfig {
    pub variant: LossVariant,
    /// Division guard in the dice ratio.
    pub epsilon: f64,
    /// Weight on the BCE term for the weighted variants.
    pub w_a: f64,
    /// Weight on the soft-dice term.
    pub w_b: f64,
    /// Probability floor/ceiling before taking logs.
    pub clamp: f64,
}

impl LossConfig {
    /// Defaults for a variant: equal weights 0.5/0.5, priority weights
    /// 0.7/0.3.
    pub fn new(variant: LossVariant) -> Self {
        let (w_a, w_b) = match variant {
            LossVariant::WbcesdP => (0.7, 0.3),
            _ => (0.5, 0.5),
        };
        LossConfig {
            variant,
            epsilon: 1e-6,
            w_a,
            w_b,
            clamp: 1e-7,
        }
    }

    pub fn with_weights(mut self, w_a: f64, w_b: f64) -> Self {
        self.w_a = w_a;
        self.w_b = w_b;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon <= 0.0 {
            return Err(Error::Config("loss epsilon must be positive".into()));
        }
        if !(0.0 < self.clamp && self.clamp < 0.5) {
            return Err(Error::Config(
                "probability clamp must lie in (0, 0.5)".into(),
            ));
        }
        match self.variant {
            LossVariant::WbcesdE | LossVariant::WbcesdP => {
                if self.w_a < 0.0 || self.w_b < 0.0 {
                    return Err(Error::Config("loss weights must be nonnegative".into()));
                }
                if (self.w_a + self.w_b - 1.0).abs() > 1e-9 {
                    return Err(Error::Config(format!(
                        "loss weights must sum to 1, got {} + {}",
                        self.w_a, self.w_b
                    )));
                }
                if self.variant == LossVariant::WbcesdP && self.w_a <= self.w_b {
                    return Err(Error::Config(format!(
                        "priority weighting requires w_a > w_b, got {} <= {}",
                        self.w_a, self.w_b
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig::new(LossVariant::WbcesdP)
    }
}

fn check_pair<S: Scalar>(prediction: &Tensor<S>, target: &Tensor<S>) -> Result<()> {
    if prediction.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "prediction shape {:?} does not match target shape {:?}",
            prediction.shape(),
            target.shape()
        )));
    }
    for &g in target.data() {
        let v = g.to_f64();
        if v != 0.0 && v != 1.0 {
            return Err(Error::Validation(format!(
                "target labels must be binary, found {v}"
            )));
        }
    }
    Ok(())
}

/// Mean binary cross-entropy over all pixels and channels, with the
/// probability clamped away from 0 and 1 before the logs.
pub fn bce_on_tape<S: Scalar>(
    tape: &mut Tape<S>,
    prediction: ValueId,
    target: ValueId,
    cfg: &LossConfig,
) -> Result<ValueId> {
    let n = tape.value(prediction).numel();
    let clamp = S::from_f64(cfg.clamp);
    let one = S::ONE;

    let p = tape.clamp(prediction, clamp, one - clamp);
    let log_p = tape.ln(p);
    let neg_p = tape.neg(p);
    let one_minus_p = tape.offset(neg_p, one);
    let log_1p = tape.ln(one_minus_p);
    let neg_t = tape.neg(target);
    let one_minus_t = tape.offset(neg_t, one);

    let pos = tape.mul(target, log_p)?;
    let neg = tape.mul(one_minus_t, log_1p)?;
    let total = tape.add(pos, neg)?;
    let summed = tape.sum(total);
    Ok(tape.scale(summed, S::from_f64(-1.0 / n as f64)))
}

/// Negated soft dice, averaged over channels: perfect overlap gives -1,
/// disjoint supports give ~0.
pub fn soft_dice_on_tape<S: Scalar>(
    tape: &mut Tape<S>,
    prediction: ValueId,
    target: ValueId,
    cfg: &LossConfig,
) -> Result<ValueId> {
    let channels = *tape.value(prediction).shape().last().unwrap();
    let eps = S::from_f64(cfg.epsilon);
    let two = S::from_f64(2.0);

    let mut acc: Option<ValueId> = None;
    for c in 0..channels {
        let pc = tape.slice_channel(prediction, c)?;
        let gc = tape.slice_channel(target, c)?;
        let inter = tape.mul(pc, gc)?;
        let inter_sum = tape.sum(inter);
        let scaled = tape.scale(inter_sum, two);
        let numerator = tape.offset(scaled, eps);
        let p_sum = tape.sum(pc);
        let g_sum = tape.sum(gc);
        let support = tape.add(p_sum, g_sum)?;
        let denominator = tape.offset(support, eps);
        let ratio = tape.div(numerator, denominator)?;
        acc = Some(match acc {
            None => ratio,
            Some(prev) => tape.add(prev, ratio)?,
        });
    }
    let total = acc.expect("at least one channel");
    Ok(tape.scale(total, S::from_f64(-1.0 / channels as f64)))
}

/// Dice of the hard-thresholded prediction, used by the BCED variant. Not
/// differentiable; the caller injects it as a constant. Both masks are
/// binary, so the sums are exact integer counts.
fn hard_dice_value<S: Scalar>(prediction: &Tensor<S>, target: &Tensor<S>, cfg: &LossConfig) -> f64 {
    let channels = *prediction.shape().last().unwrap();
    let pixels = prediction.numel() / channels;
    let p = prediction.data();
    let g = target.data();
    let mut total = 0.0;
    for c in 0..channels {
        let mut inter = 0u64;
        let mut p_count = 0u64;
        let mut g_count = 0u64;
        for i in 0..pixels {
            let pv = p[i * channels + c].to_f64() >= 0.5;
            let gv = g[i * channels + c].to_f64() == 1.0;
            inter += (pv && gv) as u64;
            p_count += pv as u64;
            g_count += gv as u64;
        }
        total += (2.0 * inter as f64 + cfg.epsilon) / ((p_count + g_count) as f64 + cfg.epsilon);
    }
    -total / channels as f64
}

/// Build the configured objective on the tape.
pub fn loss_on_tape<S: Scalar>(
    tape: &mut Tape<S>,
    prediction: ValueId,
    target: ValueId,
    cfg: &LossConfig,
) -> Result<ValueId> {
    cfg.validate()?;
    check_pair(tape.value(prediction), tape.value(target))?;
    match cfg.variant {
        LossVariant::Bce => bce_on_tape(tape, prediction, target, cfg),
        LossVariant::Bced => {
            let l = bce_on_tape(tape, prediction, target, cfg)?;
            let d = hard_dice_value(tape.value(prediction), tape.value(target), cfg);
            let d = tape.leaf(Tensor::scalar(S::from_f64(d)));
            tape.add(l, d)
        }
        LossVariant::Bcesd => {
            let l = bce_on_tape(tape, prediction, target, cfg)?;
            let s = soft_dice_on_tape(tape, prediction, target, cfg)?;
            tape.add(l, s)
        }
        LossVariant::WbcesdE | LossVariant::WbcesdP => {
            let l = bce_on_tape(tape, prediction, target, cfg)?;
            let s = soft_dice_on_tape(tape, prediction, target, cfg)?;
            let wl = tape.scale(l, S::from_f64(cfg.w_a));
            let ws = tape.scale(s, S::from_f64(cfg.w_b));
            tape.add(wl, ws)
        }
    }
}

/// Evaluate the configured objective without gradient tracking.
pub fn loss_value<S: Scalar>(
    prediction: &Tensor<S>,
    target: &Tensor<S>,
    cfg: &LossConfig,
) -> Result<S> {
    let mut tape = Tape::new();
    let p = tape.leaf(prediction.clone());
    let g = tape.leaf(target.clone());
    let loss = loss_on_tape(&mut tape, p, g, cfg)?;
    Ok(tape.value(loss).item())
}

/// Standalone BCE evaluation.
pub fn bce_value<S: Scalar>(
    prediction: &Tensor<S>,
    target: &Tensor<S>,
    cfg: &LossConfig,
) -> Result<S> {
    check_pair(prediction, target)?;
    let mut tape = Tape::new();
    let p = tape.leaf(prediction.clone());
    let g = tape.leaf(target.clone());
    let loss = bce_on_tape(&mut tape, p, g, cfg)?;
    Ok(tape.value(loss).item())
}

/// Standalone soft-dice evaluation.
pub fn soft_dice_value<S: Scalar>(
    prediction: &Tensor<S>,
    target: &Tensor<S>,
    cfg: &LossConfig,
) -> Result<S> {
    check_pair(prediction, target)?;
    let mut tape = Tape::new();
    let p = tape.leaf(prediction.clone());
    let g = tape.leaf(target.clone());
    let loss = soft_dice_on_tape(&mut tape, p, g, cfg)?;
    Ok(tape.value(loss).item())
}

/// Parse the weighted combination out of injected sub-loss values; used by
/// tests and the loss-comparison harness to cross-check combination
/// arithmetic without a network in the loop.
pub fn combine(cfg: &LossConfig, bce: f64, soft_dice: f64, hard_dice: f64) -> Result<f64> {
    cfg.validate()?;
    Ok(match cfg.variant {
        LossVariant::Bce => bce,
        LossVariant::Bced => bce + hard_dice,
        LossVariant::Bcesd => bce + soft_dice,
        LossVariant::WbcesdE | LossVariant::WbcesdP => cfg.w_a * bce + cfg.w_b * soft_dice,
    })
}
