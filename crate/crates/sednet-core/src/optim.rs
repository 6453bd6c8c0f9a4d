//! Adam optimization and the reduce-on-plateau learning-rate schedule.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Adam moment coefficients and stability epsilon.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Per-parameter first/second moment estimates plus the step counter.
pub struct AdamState {
    m: Vec<Tensor<f32>>,
    v: Vec<Tensor<f32>>,
    step: u32,
}

impl AdamState {
    pub fn new(model: &Model<f32>) -> Self {
        let m = model
            .params()
            .iter()
            .map(|p| Tensor::zeros(p.value.shape().to_vec()))
            .collect::<Vec<_>>();
        let v = m.clone();
        AdamState { m, v, step: 0 }
    }

    pub fn step_count(&self) -> u32 {
        self.step
    }
}

/// One Adam update over every trainable parameter.
///
/// Frozen parameters are skipped entirely: their values, gradients, and
/// moments stay bit-identical. A non-finite gradient aborts with the
/// offending parameter named.
pub fn adam_step(
    model: &mut Model<f32>,
    state: &mut AdamState,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    for p in model.params() {
        if p.trainable && p.grad.data().iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite gradient in parameter {}",
                p.name
            )));
        }
    }

    state.step += 1;
    let bc1 = 1.0 - Scalar::powi(cfg.beta1, state.step);
    let bc2 = 1.0 - Scalar::powi(cfg.beta2, state.step);
    let (b1, b2) = (cfg.beta1 as f32, cfg.beta2 as f32);
    let eps = cfg.epsilon as f32;
    let lr32 = lr as f32;
    let (bc1, bc2) = (bc1 as f32, bc2 as f32);

    for (i, p) in model.params_mut().iter_mut().enumerate() {
        if !p.trainable {
            continue;
        }
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let theta = p.value.data_mut();
        for ((t, g), (m, v)) in theta
            .iter_mut()
            .zip(p.grad.data())
            .zip(m.iter_mut().zip(v.iter_mut()))
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *t -= lr32 * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Reduce-on-plateau schedule: shrink the rate by `factor` whenever the best
/// validation loss fails to improve for `patience` consecutive epochs.
#[derive(Clone, Debug)]
pub struct PlateauScheduler {
    lr: f64,
    factor: f64,
    patience: usize,
    min_lr: f64,
    /// Improvements smaller than this do not reset the counter.
    tolerance: f64,
    best: f64,
    stale_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(initial_lr: f64, factor: f64, patience: usize, min_lr: f64) -> Self {
        PlateauScheduler {
            lr: initial_lr,
            factor,
            patience,
            min_lr,
            tolerance: 1e-8,
            best: f64::INFINITY,
            stale_epochs: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Record one epoch's validation loss; returns the rate for the next
    /// epoch.
    pub fn observe(&mut self, validation_loss: f64) -> f64 {
        if validation_loss < self.best - self.tolerance {
            self.best = validation_loss;
            self.stale_epochs = 0;
        } else {
            self.stale_epochs += 1;
            if self.stale_epochs >= self.patience {
                self.lr = (self.lr * self.factor).max(self.min_lr);
                self.stale_epochs = 0;
            }
        }
        self.lr
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use alloc::vec;

    fn small_model() -> Model<f32> {
        let cfg = ModelConfig {
            input_height: 4,
            input_width: 4,
            encoder: vec![1, 2, 3],
            bottleneck: 6,
            decoder: vec![2, 1],
            ..ModelConfig::default()
        };
        Model::build(cfg).unwrap()
    }

    #[test]
    fn first_step_magnitude_is_about_lr() {
        // theta = 1, g = 4: bias correction makes the first update ~lr
        // regardless of the gradient's scale.
        let mut model = small_model();
        for p in model.params_mut() {
            for v in p.value.data_mut() {
                *v = 1.0;
            }
            for g in p.grad.data_mut() {
                *g = 4.0;
            }
        }
        let mut state = AdamState::new(&model);
        adam_step(&mut model, &mut state, 0.1, &AdamConfig::default()).unwrap();
        for p in model.params() {
            for &v in p.value.data() {
                assert!((v - 0.9).abs() < 1e-6, "{} -> {v}", p.name);
            }
        }
    }

    #[test]
    fn zero_gradient_leaves_values_unchanged() {
        let mut model = small_model();
        let before: Vec<Vec<f32>> = model
            .params()
            .iter()
            .map(|p| p.value.data().to_vec())
            .collect();
        let mut state = AdamState::new(&model);
        adam_step(&mut model, &mut state, 0.1, &AdamConfig::default()).unwrap();
        for (p, prev) in model.params().iter().zip(&before) {
            assert_eq!(p.value.data(), &prev[..]);
        }
    }

    #[test]
    fn frozen_parameters_are_bit_identical_after_steps() {
        let mut model = small_model();
        model.freeze_for_transfer();
        for p in model.params_mut() {
            for g in p.grad.data_mut() {
                *g = 2.5;
            }
        }
        let before: Vec<Vec<u32>> = model
            .params()
            .iter()
            .map(|p| p.value.data().iter().map(|v| v.to_bits()).collect())
            .collect();
        let mut state = AdamState::new(&model);
        for _ in 0..5 {
            adam_step(&mut model, &mut state, 0.1, &AdamConfig::default()).unwrap();
        }
        for (p, prev) in model.params().iter().zip(&before) {
            let bits: Vec<u32> = p.value.data().iter().map(|v| v.to_bits()).collect();
            if p.name.starts_with("head.") {
                assert_ne!(&bits, prev, "head should train");
            } else {
                assert_eq!(&bits, prev, "{} should be frozen", p.name);
            }
        }
    }

    #[test]
    fn nan_gradient_names_the_parameter() {
        let mut model = small_model();
        model.params_mut()[3].grad.data_mut()[0] = f32::NAN;
        let name = model.params()[3].name.clone();
        let mut state = AdamState::new(&model);
        let err = adam_step(&mut model, &mut state, 0.1, &AdamConfig::default()).unwrap_err();
        assert!(format!("{err}").contains(&name));
    }

    #[test]
    fn plateau_shrinks_after_patience() {
        let mut sched = PlateauScheduler::new(3e-4, 0.3, 2, 1e-7);
        assert_eq!(sched.observe(1.0), 3e-4);
        assert_eq!(sched.observe(1.0), 3e-4);
        let lr = sched.observe(1.0);
        assert_eq!(lr, 3e-4 * 0.3);
        assert!((lr - 9e-5).abs() < 1e-12);
    }

    #[test]
    fn improving_losses_keep_the_rate() {
        let mut sched = PlateauScheduler::new(3e-4, 0.3, 2, 1e-7);
        for i in 0..10 {
            let lr = sched.observe(1.0 - 0.05 * i as f64);
            assert_eq!(lr, 3e-4);
        }
    }

    #[test]
    fn two_consecutive_plateaus_compound() {
        let mut sched = PlateauScheduler::new(3e-4, 0.3, 2, 1e-7);
        for _ in 0..5 {
            sched.observe(1.0);
        }
        let expected = 3e-4 * 0.3 * 0.3;
        assert!((sched.lr() - expected).abs() < 1e-15, "{}", sched.lr());
    }

    #[test]
    fn rate_never_falls_below_floor() {
        let mut sched = PlateauScheduler::new(3e-4, 0.3, 1, 1e-7);
        for _ in 0..100 {
            sched.observe(1.0);
        }
        assert_eq!(sched.lr(), 1e-7);
    }
}
