//! Training loop: patient-level splits, Adam with a plateau schedule,
//! best-checkpoint tracking, and head-only transfer retraining.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::metrics::{assemble_input, assemble_target, dsc, threshold};
use crate::model::Model;
use crate::objectives::{loss_on_tape, LossConfig};
use crate::optim::{adam_step, AdamConfig, AdamState, PlateauScheduler};
use crate::preprocess::{LabelMap, Volume};
use crate::rng::Rng;
use crate::tape::Tape;
use crate::tensor::Tensor;

/// Everything the optimization loop needs to know.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub initial_lr: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub min_lr: f64,
    pub epochs: usize,
    /// Slices per batch when `per_sample_batches` is off.
    pub batch_slices: usize,
    /// One batch per sample (all of its retained slices) instead of
    /// fixed-size slice batches.
    pub per_sample_batches: bool,
    pub split: (f64, f64, f64),
    pub loss: LossConfig,
    pub adam: AdamConfig,
    pub labels: LabelMap,
    pub seed: u64,
    /// Stop once every class's validation Dice reaches this value.
    pub stop_at_val_dice: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            initial_lr: 3e-4,
            plateau_factor: 0.3,
            plateau_patience: 2,
            min_lr: 1e-7,
            epochs: 50,
            batch_slices: 23,
            per_sample_batches: true,
            split: (0.8, 0.1, 0.1),
            loss: LossConfig::default(),
            adam: AdamConfig::default(),
            labels: LabelMap::default(),
            seed: 0,
            stop_at_val_dice: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.initial_lr <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(0.0 < self.plateau_factor && self.plateau_factor < 1.0) {
            return Err(Error::Config(format!(
                "plateau factor must lie in (0,1), got {}",
                self.plateau_factor
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epoch count must be >= 1".into()));
        }
        if self.batch_slices == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        let (a, b, c) = self.split;
        if a <= 0.0 || b < 0.0 || c < 0.0 || (a + b + c - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split ratios must be nonnegative and sum to 1, got {:?}",
                self.split
            )));
        }
        if let Some(t) = self.stop_at_val_dice {
            if !(0.0 < t && t <= 1.0) {
                return Err(Error::Config(format!(
                    "dice stop threshold must lie in (0,1], got {t}"
                )));
            }
        }
        self.loss.validate()
    }
}

/// Partition `0..n` into train/validation/test index sets at sample
/// granularity.
///
/// Boundaries are cumulative (`369` at 80:10:10 gives `296/37/36`), and
/// every split is guaranteed at least one sample.
pub fn split_indices(
    n: usize,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let (a, b, c) = ratios;
    if (a + b + c - 1.0).abs() > 1e-9 || a <= 0.0 || b < 0.0 || c < 0.0 {
        return Err(Error::Config(format!(
            "split ratios must be nonnegative and sum to 1, got {ratios:?}"
        )));
    }
    if n < 3 {
        return Err(Error::Data(format!(
            "need at least 3 samples to split, got {n}"
        )));
    }
    let bound = |r: f64| -> usize {
        // Guard against values like 8.000000000000002 crossing the ceiling.
        let x = r * n as f64 - 1e-9;
        if x <= 0.0 {
            return 0;
        }
        let floor = x as usize;
        if (floor as f64) < x {
            floor + 1
        } else {
            floor
        }
    };
    let mut b1 = bound(a);
    let mut b2 = bound(a + b);
    // Keep every split nonempty.
    b2 = b2.clamp(2, n - 1);
    b1 = b1.clamp(1, b2 - 1);

    let mut rng = Rng::seed_from_u64(seed);
    let perm = rng.permutation(n);
    let mut train: Vec<usize> = perm[..b1].to_vec();
    let mut val: Vec<usize> = perm[b1..b2].to_vec();
    let mut test: Vec<usize> = perm[b2..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok((train, val, test))
}

/// One epoch's summary.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochReport {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Per-class validation Dice in label order (NTC, ED, ET).
    pub val_dice: [f64; 3],
    /// Learning rate in effect after this epoch's plateau update.
    pub lr: f64,
}

/// Snapshot of every parameter, for best-checkpoint tracking.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub epoch: usize,
    pub val_loss: f64,
    params: Vec<(String, Tensor<f32>, bool)>,
}

impl Checkpoint {
    pub fn capture(model: &Model<f32>, epoch: usize, val_loss: f64) -> Self {
        Checkpoint {
            epoch,
            val_loss,
            params: model
                .params()
                .iter()
                .map(|p| (p.name.clone(), p.value.clone(), p.trainable))
                .collect(),
        }
    }

    pub fn restore(&self, model: &mut Model<f32>) -> Result<()> {
        if self.params.len() != model.params().len() {
            return Err(Error::Data(format!(
                "checkpoint has {} parameters, model has {}",
                self.params.len(),
                model.params().len()
            )));
        }
        for (p, (name, value, trainable)) in model.params_mut().iter_mut().zip(&self.params) {
            if &p.name != name || p.value.shape() != value.shape() {
                return Err(Error::Data(format!(
                    "checkpoint parameter {name} does not match model parameter {}",
                    p.name
                )));
            }
            p.value = value.clone();
            p.trainable = *trainable;
        }
        Ok(())
    }
}

/// Result of a training run. `aborted` carries the reason when the run
/// stopped early on non-finite numbers; the best checkpoint taken before the
/// abort is always retained.
pub struct TrainOutcome {
    pub reports: Vec<EpochReport>,
    pub best: Checkpoint,
    pub aborted: Option<String>,
}

struct Batch {
    input: Tensor<f32>,
    target: Tensor<f32>,
    slices: usize,
}

fn make_batches(volumes: &[Volume], cfg: &TrainConfig) -> Result<Vec<Batch>> {
    let mut batches = Vec::new();
    if cfg.per_sample_batches {
        // One batch per sample; samples larger than `batch_slices` (counts
        // were not equalized) are cut into bounded chunks.
        for v in volumes {
            if v.slice_count() == 0 {
                continue;
            }
            let mut start = 0;
            while start < v.slice_count() {
                let end = (start + cfg.batch_slices).min(v.slice_count());
                let part = Volume {
                    id: v.id.clone(),
                    images: v.images[start..end].to_vec(),
                    masks: v.masks[start..end].to_vec(),
                };
                batches.push(Batch {
                    input: assemble_input(&part)?,
                    target: assemble_target(&part, &cfg.labels)?,
                    slices: part.slice_count(),
                });
                start = end;
            }
        }
    } else {
        // Flatten all slices and cut fixed-size groups.
        let mut single_slices: Vec<Volume> = Vec::new();
        for v in volumes {
            for i in 0..v.slice_count() {
                single_slices.push(Volume {
                    id: format!("{}#{i}", v.id),
                    images: vec![v.images[i].clone()],
                    masks: vec![v.masks[i].clone()],
                });
            }
        }
        for chunk in single_slices.chunks(cfg.batch_slices) {
            let merged = Volume {
                id: String::from("batch"),
                images: chunk.iter().map(|v| v.images[0].clone()).collect(),
                masks: chunk.iter().map(|v| v.masks[0].clone()).collect(),
            };
            batches.push(Batch {
                input: assemble_input(&merged)?,
                target: assemble_target(&merged, &cfg.labels)?,
                slices: merged.slice_count(),
            });
        }
    }
    if batches.is_empty() {
        return Err(Error::Data("training set has no slices".into()));
    }
    Ok(batches)
}

/// Validation loss plus per-class Dice at threshold 0.5.
fn validate_model(
    model: &Model<f32>,
    batches: &[Batch],
    loss_cfg: &LossConfig,
) -> Result<(f64, [f64; 3])> {
    let mut loss_sum = 0.0;
    let mut dice_sum = [0.0f64; 3];
    let mut n_slices = 0usize;
    for batch in batches {
        let probs = model.forward(&batch.input)?;
        let loss = crate::objectives::loss_value(&probs, &batch.target, loss_cfg)?;
        loss_sum += loss as f64 * batch.slices as f64;
        let predicted = threshold(&probs, 0.5)?;
        let truth = threshold(&batch.target, 0.5)?;
        for si in 0..batch.slices {
            for c in 0..3 {
                dice_sum[c] += dsc(&predicted[si][c], &truth[si][c], 1e-6)?;
            }
        }
        n_slices += batch.slices;
    }
    let loss = loss_sum / n_slices as f64;
    let dice = dice_sum.map(|d| d / n_slices as f64);
    Ok((loss, dice))
}

/// One gradient step over one batch; returns the batch loss.
fn train_step(
    model: &mut Model<f32>,
    state: &mut AdamState,
    batch: &Batch,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<f64> {
    model.zero_grads();
    let mut tape = Tape::new();
    let input = tape.leaf(batch.input.clone());
    let taped = model.forward_on_tape(&mut tape, input)?;
    let target = tape.leaf(batch.target.clone());
    let loss = loss_on_tape(&mut tape, taped.output, target, &cfg.loss)?;
    let loss_value = tape.value(loss).item() as f64;
    if !loss_value.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite training loss {loss_value}"
        )));
    }
    model.backward_and_accumulate(&tape, loss, &taped)?;
    adam_step(model, state, lr, &cfg.adam)?;
    Ok(loss_value)
}

/// Train `model` on the given volumes.
///
/// Deterministic for a fixed seed: batch order, initialization, and every
/// reduction are seeded or order-invariant.
pub fn train(
    model: &mut Model<f32>,
    train_volumes: &[Volume],
    val_volumes: &[Volume],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train_batches = make_batches(train_volumes, cfg)?;
    let val_batches = make_batches(val_volumes, cfg)?;

    let mut scheduler = PlateauScheduler::new(
        cfg.initial_lr,
        cfg.plateau_factor,
        cfg.plateau_patience,
        cfg.min_lr,
    );
    let mut state = AdamState::new(model);
    let mut rng = Rng::seed_from_u64(cfg.seed ^ 0x7261696e);
    let mut reports = Vec::with_capacity(cfg.epochs);
    let mut best = Checkpoint::capture(model, 0, f64::INFINITY);
    let mut aborted = None;

    'epochs: for epoch in 1..=cfg.epochs {
        let order = rng.permutation(train_batches.len());
        let mut loss_sum = 0.0;
        let mut slices = 0usize;
        for &bi in &order {
            let batch = &train_batches[bi];
            match train_step(model, &mut state, batch, scheduler.lr(), cfg) {
                Ok(loss) => {
                    loss_sum += loss * batch.slices as f64;
                    slices += batch.slices;
                }
                Err(Error::Numeric(reason)) => {
                    aborted = Some(format!("epoch {epoch}: {reason}"));
                    break 'epochs;
                }
                Err(other) => return Err(other),
            }
        }
        let train_loss = loss_sum / slices as f64;
        let (val_loss, val_dice) = validate_model(model, &val_batches, &cfg.loss)?;
        let lr = scheduler.observe(val_loss);
        if val_loss < best.val_loss {
            best = Checkpoint::capture(model, epoch, val_loss);
        }
        reports.push(EpochReport {
            epoch,
            train_loss,
            val_loss,
            val_dice,
            lr,
        });
        if let Some(t) = cfg.stop_at_val_dice {
            if val_dice.iter().all(|&d| d >= t) {
                break;
            }
        }
    }

    if best.val_loss.is_infinite() {
        // Aborted before the first epoch completed; keep the initial state.
        best = Checkpoint::capture(model, 0, f64::INFINITY);
    }
    Ok(TrainOutcome {
        reports,
        best,
        aborted,
    })
}

/// Retrain with every non-head layer frozen. The caller is responsible for
/// loading pretrained weights into `model` first.
pub fn transfer_train(
    model: &mut Model<f32>,
    train_volumes: &[Volume],
    val_volumes: &[Volume],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    model.freeze_for_transfer();
    train(model, train_volumes, val_volumes, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::preprocess::Grid;

    pub(crate) fn toy_volume(id: &str, slices: usize, size: usize, offset: usize) -> Volume {
        let mut images = Vec::new();
        let mut masks = Vec::new();
        for s in 0..slices {
            let mut image = Grid::new(size, size, 0.1f32);
            let mut mask = Grid::new(size, size, 0u8);
            let y0 = (2 + (s + offset) * 2) % (size / 2);
            let x0 = (2 + (s + offset) * 3) % (size / 2);
            let extent = size / 3;
            for y in y0..y0 + extent {
                for x in x0..x0 + extent {
                    let (dy, dx) = (y - y0, x - x0);
                    let inner = extent / 3;
                    let code = if dy >= inner && dy < 2 * inner && dx >= inner && dx < 2 * inner {
                        4
                    } else if dy >= inner / 2 && dx >= inner / 2 {
                        1
                    } else {
                        2
                    };
                    mask.set(y, x, code);
                    let brightness = match code {
                        4 => 0.95,
                        1 => 0.7,
                        _ => 0.45,
                    };
                    image.set(y, x, brightness);
                }
            }
            images.push(image);
            masks.push(mask);
        }
        Volume {
            id: id.into(),
            images,
            masks,
        }
    }

    fn tiny_model(size: usize) -> Model<f32> {
        let cfg = ModelConfig {
            input_height: size,
            input_width: size,
            encoder: vec![4, 6, 8],
            bottleneck: 16,
            decoder: vec![6, 4],
            ..ModelConfig::default()
        };
        Model::build(cfg).unwrap()
    }

    fn quick_config(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            initial_lr: 3e-3,
            seed: 11,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn split_allocations_match_boundary_arithmetic() {
        let (train, val, test) = split_indices(10, (0.8, 0.1, 0.1), 0).unwrap();
        assert_eq!((train.len(), val.len(), test.len()), (8, 1, 1));

        let (train, val, test) = split_indices(369, (0.8, 0.1, 0.1), 0).unwrap();
        assert_eq!((train.len(), val.len(), test.len()), (296, 37, 36));
    }

    #[test]
    fn split_is_disjoint_and_seeded() {
        let (a1, b1, c1) = split_indices(50, (0.8, 0.1, 0.1), 7).unwrap();
        let (a2, b2, c2) = split_indices(50, (0.8, 0.1, 0.1), 7).unwrap();
        assert_eq!((&a1, &b1, &c1), (&a2, &b2, &c2));
        let mut all: Vec<usize> = a1.iter().chain(&b1).chain(&c1).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());

        let (a3, _, _) = split_indices(50, (0.8, 0.1, 0.1), 8).unwrap();
        assert_ne!(a1, a3);
    }

    #[test]
    fn split_rejects_tiny_datasets() {
        assert!(split_indices(2, (0.8, 0.1, 0.1), 0).is_err());
        let (t, v, te) = split_indices(3, (0.8, 0.1, 0.1), 0).unwrap();
        assert_eq!((t.len(), v.len(), te.len()), (1, 1, 1));
    }

    #[test]
    fn loss_strictly_decreases_over_first_steps() {
        let size = 16;
        let volume = toy_volume("fixed", 4, size, 0);
        let mut model = tiny_model(size);
        let cfg = quick_config(1);
        let batch = make_batches(core::slice::from_ref(&volume), &cfg)
            .unwrap()
            .remove(0);
        let mut state = AdamState::new(&model);
        let mut last = f64::INFINITY;
        for step in 0..10 {
            let loss = train_step(&mut model, &mut state, &batch, 3e-3, &cfg).unwrap();
            assert!(loss < last, "step {step}: {loss} !< {last}");
            last = loss;
        }
    }

    #[test]
    fn training_is_bit_deterministic() {
        let size = 16;
        let volumes = vec![toy_volume("a", 3, size, 0), toy_volume("b", 3, size, 5)];
        let run = || {
            let mut model = tiny_model(size);
            train(&mut model, &volumes, &volumes, &quick_config(3)).unwrap()
        };
        let r1 = run();
        let r2 = run();
        assert_eq!(r1.reports, r2.reports);
        for (x, y) in r1.reports.iter().zip(&r2.reports) {
            assert_eq!(x.train_loss.to_bits(), y.train_loss.to_bits());
            assert_eq!(x.val_loss.to_bits(), y.val_loss.to_bits());
        }
    }

    #[test]
    fn learning_rate_is_non_increasing() {
        let size = 16;
        let volumes = vec![toy_volume("a", 3, size, 0)];
        let mut model = tiny_model(size);
        let outcome = train(&mut model, &volumes, &volumes, &quick_config(6)).unwrap();
        for pair in outcome.reports.windows(2) {
            assert!(pair[1].lr <= pair[0].lr);
        }
    }

    #[test]
    fn best_checkpoint_restores_reported_val_loss() {
        let size = 16;
        let volumes = vec![toy_volume("a", 3, size, 0), toy_volume("b", 3, size, 2)];
        let mut model = tiny_model(size);
        let cfg = quick_config(4);
        let outcome = train(&mut model, &volumes, &volumes, &cfg).unwrap();
        let mut restored = tiny_model(size);
        outcome.best.restore(&mut restored).unwrap();
        let batches = make_batches(&volumes, &cfg).unwrap();
        let (val_loss, _) = validate_model(&restored, &batches, &cfg.loss).unwrap();
        assert!((val_loss - outcome.best.val_loss).abs() < 1e-12);
    }

    #[test]
    fn transfer_keeps_frozen_parameters_bit_identical() {
        let size = 16;
        let volumes = vec![toy_volume("a", 3, size, 0)];
        let mut model = tiny_model(size);
        let pretrained: Vec<Vec<u32>> = model
            .params()
            .iter()
            .map(|p| p.value.data().iter().map(|v| v.to_bits()).collect())
            .collect();
        let outcome = transfer_train(&mut model, &volumes, &volumes, &quick_config(2)).unwrap();
        assert!(outcome.aborted.is_none());
        for (p, before) in model.params().iter().zip(&pretrained) {
            let bits: Vec<u32> = p.value.data().iter().map(|v| v.to_bits()).collect();
            if p.name.starts_with("head.") {
                assert_ne!(&bits, before, "head must train");
            } else {
                assert_eq!(&bits, before, "{} must stay frozen", p.name);
            }
        }
    }

    #[test]
    fn non_finite_loss_aborts_with_checkpoint() {
        let size = 16;
        let volumes = vec![toy_volume("a", 2, size, 0)];
        let mut model = tiny_model(size);
        // Poison the head so NaN reaches the probabilities (earlier layers
        // would launder it through ReLU's max).
        let head = model
            .params()
            .iter()
            .position(|p| p.name == "head.weight")
            .unwrap();
        model.params_mut()[head].value.data_mut()[0] = f32::NAN;
        let outcome = train(&mut model, &volumes, &volumes, &quick_config(2)).unwrap();
        assert!(outcome.aborted.is_some());
        assert!(outcome.reports.is_empty());
    }

    #[test]
    fn dice_early_stop_halts_the_run() {
        let size = 16;
        let volumes = vec![toy_volume("a", 3, size, 0)];
        let mut model = tiny_model(size);
        let cfg = TrainConfig {
            // Any dice satisfies a zero-ish threshold after epoch 1.
            stop_at_val_dice: Some(1e-12),
            ..quick_config(50)
        };
        let outcome = train(&mut model, &volumes, &volumes, &cfg).unwrap();
        assert_eq!(outcome.reports.len(), 1);
    }

    #[test]
    fn oversized_samples_are_chunked() {
        let size = 16;
        let volumes = vec![toy_volume("a", 7, size, 0)];
        let cfg = TrainConfig {
            batch_slices: 3,
            ..quick_config(1)
        };
        let batches = make_batches(&volumes, &cfg).unwrap();
        let sizes: Vec<usize> = batches.iter().map(|b| b.slices).collect();
        assert_eq!(sizes, vec![3, 3, 1]);
    }

    #[test]
    fn fixed_size_batching_chunks_slices() {
        let size = 16;
        let volumes = vec![toy_volume("a", 5, size, 0), toy_volume("b", 4, size, 1)];
        let cfg = TrainConfig {
            per_sample_batches: false,
            batch_slices: 4,
            ..quick_config(1)
        };
        let batches = make_batches(&volumes, &cfg).unwrap();
        let sizes: Vec<usize> = batches.iter().map(|b| b.slices).collect();
        assert_eq!(sizes, vec![4, 4, 1]);
    }
}
