//! Evaluation metrics: Dice similarity and the exact symmetric Hausdorff
//! distance over binary masks.
//!
//! Pixel coordinates are integers, so all Hausdorff comparisons run on exact
//! squared distances in `u64`; the single square root happens at the end.
//! That makes the early-break scan provably equal to the naive double loop,
//! which is kept alongside as an oracle.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::preprocess::{encode_labels, normalize01, LabelMap, Volume};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Bitset-backed binary image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<u64>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0, "mask dimensions must be positive");
        let words = (height * width).div_ceil(64);
        BinaryMask {
            height,
            width,
            bits: vec![0; words],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    fn bit(&self, y: usize, x: usize) -> (usize, u64) {
        let i = y * self.width + x;
        (i / 64, 1u64 << (i % 64))
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        let (w, m) = self.bit(y, x);
        self.bits[w] & m != 0
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, value: bool) {
        let (w, m) = self.bit(y, x);
        if value {
            self.bits[w] |= m;
        } else {
            self.bits[w] &= !m;
        }
    }

    /// Number of foreground pixels.
    pub fn count(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&w| w == 0)
    }

    /// Foreground pixel coordinates in row-major order.
    pub fn foreground(&self) -> Vec<(i64, i64)> {
        let mut points = Vec::with_capacity(self.count());
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(y, x) {
                    points.push((y as i64, x as i64));
                }
            }
        }
        points
    }

    fn intersection_count(&self, other: &BinaryMask) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }
}

fn check_dims(a: &BinaryMask, b: &BinaryMask) -> Result<()> {
    if (a.height, a.width) != (b.height, b.width) {
        return Err(Error::Shape(format!(
            "mask dimensions differ: {}x{} vs {}x{}",
            a.height, a.width, b.height, b.width
        )));
    }
    Ok(())
}

/// Dice similarity coefficient `(2|P∩G| + eps) / (|P| + |G| + eps)`.
///
/// For binary masks the squared sums of the usual formulation equal the
/// plain counts, so this is the exact coefficient.
pub fn dsc(prediction: &BinaryMask, truth: &BinaryMask, eps: f64) -> Result<f64> {
    check_dims(prediction, truth)?;
    let inter = prediction.intersection_count(truth) as f64;
    let support = (prediction.count() + truth.count()) as f64;
    Ok((2.0 * inter + eps) / (support + eps))
}

#[inline]
fn dist2(a: (i64, i64), b: (i64, i64)) -> u64 {
    let dy = a.0 - b.0;
    let dx = a.1 - b.1;
    (dy * dy + dx * dx) as u64
}

/// Directed Hausdorff (squared) with the early-break scan: once a pairing
/// closer than the running maximum is found, the outer point cannot raise
/// that maximum and the inner loop aborts.
fn directed_hausdorff2(from: &[(i64, i64)], to: &[(i64, i64)]) -> u64 {
    let mut cmax = 0u64;
    for &a in from {
        let mut cmin = u64::MAX;
        for &b in to {
            let d = dist2(a, b);
            if d <= cmax {
                cmin = 0;
                break;
            }
            if d < cmin {
                cmin = d;
            }
        }
        if cmin != 0 && cmin != u64::MAX && cmin > cmax {
            cmax = cmin;
        }
    }
    cmax
}

/// Symmetric Hausdorff distance in spacing units.
///
/// Point orders are randomized from `rng` (the early break profits from a
/// scrambled scan); the result is exact and independent of the order.
/// Returns `None` when either mask is empty, in which case the distance is
/// undefined.
pub fn hausdorff(
    a: &BinaryMask,
    b: &BinaryMask,
    spacing: f64,
    rng: &mut Rng,
) -> Result<Option<f64>> {
    check_dims(a, b)?;
    let mut pa = a.foreground();
    let mut pb = b.foreground();
    if pa.is_empty() || pb.is_empty() {
        return Ok(None);
    }
    rng.shuffle(&mut pa);
    rng.shuffle(&mut pb);
    let d2 = directed_hausdorff2(&pa, &pb).max(directed_hausdorff2(&pb, &pa));
    Ok(Some((d2 as f64).sqrt() * spacing))
}

/// Naive O(|A|·|B|) double-loop Hausdorff; the oracle the early-break scan
/// must match exactly.
pub fn hausdorff_naive(a: &BinaryMask, b: &BinaryMask, spacing: f64) -> Result<Option<f64>> {
    check_dims(a, b)?;
    let pa = a.foreground();
    let pb = b.foreground();
    if pa.is_empty() || pb.is_empty() {
        return Ok(None);
    }
    let directed = |from: &[(i64, i64)], to: &[(i64, i64)]| -> u64 {
        let mut worst = 0u64;
        for &p in from {
            let mut best = u64::MAX;
            for &q in to {
                let d = dist2(p, q);
                if d < best {
                    best = d;
                }
            }
            if best > worst {
                worst = best;
            }
        }
        worst
    };
    let d2 = directed(&pa, &pb).max(directed(&pb, &pa));
    Ok(Some((d2 as f64).sqrt() * spacing))
}

/// Binarize a `[B,H,W,C]` probability map at `tau` (foreground at `p >= tau`).
///
/// Returns one mask per class per batch element: `out[b][c]`.
pub fn threshold<S: Scalar>(probabilities: &Tensor<S>, tau: f64) -> Result<Vec<Vec<BinaryMask>>> {
    if !(0.0 < tau && tau < 1.0) {
        return Err(Error::Config(format!(
            "threshold must lie in (0,1), got {tau}"
        )));
    }
    let (batch, h, w, channels) = probabilities.dims4()?;
    let data = probabilities.data();
    let mut out = Vec::with_capacity(batch);
    for bi in 0..batch {
        let mut per_class = Vec::with_capacity(channels);
        for c in 0..channels {
            let mut mask = BinaryMask::new(h, w);
            for y in 0..h {
                for x in 0..w {
                    let v = data[((bi * h + y) * w + x) * channels + c].to_f64();
                    if v >= tau {
                        mask.set(y, x, true);
                    }
                }
            }
            per_class.push(mask);
        }
        out.push(per_class);
    }
    Ok(out)
}

/// Per-class aggregate metrics.
#[derive(Clone, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassMetrics {
    pub class: String,
    /// Mean Dice over all slices.
    pub dice: f64,
    /// Mean Hausdorff over slices where it is defined; `None` if never.
    pub hausdorff: Option<f64>,
    pub n_slices: usize,
    /// Slices excluded from the Hausdorff mean because a mask was empty.
    pub n_hd_undefined: usize,
}

/// Evaluation report: one entry per class, in label-map order.
#[derive(Clone, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsReport {
    pub classes: Vec<ClassMetrics>,
}

/// Evaluation knobs; spacing converts pixel distances to millimeters.
#[derive(Clone, Copy, Debug)]
pub struct EvalConfig {
    pub tau: f64,
    pub spacing: f64,
    pub epsilon: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            tau: 0.5,
            spacing: 1.0,
            epsilon: 1e-6,
        }
    }
}

/// Run the model over every slice of every volume and aggregate per-class
/// mean Dice and mean Hausdorff distance.
///
/// Deterministic: the Hausdorff scan order is seeded per slice.
pub fn evaluate(
    model: &Model<f32>,
    volumes: &[Volume],
    labels: &LabelMap,
    cfg: &EvalConfig,
) -> Result<MetricsReport> {
    if volumes.iter().all(|v| v.images.is_empty()) {
        return Err(Error::Data("evaluation split is empty".into()));
    }
    let class_names = labels.class_names();
    let n_classes = class_names.len();
    let mut dice_sum = vec![0.0f64; n_classes];
    let mut hd_sum = vec![0.0f64; n_classes];
    let mut hd_defined = vec![0usize; n_classes];
    let mut n_slices = 0usize;

    let mut slice_counter = 0u64;
    for volume in volumes {
        volume.validate()?;
        if volume.images.is_empty() {
            continue;
        }
        let probs = forward_volume(model, volume, 8)?;
        let predicted = threshold(&probs, cfg.tau)?;
        for (si, mask_slice) in volume.masks.iter().enumerate() {
            let planes = encode_labels(mask_slice, labels)?;
            let truth = threshold(&planes_as_batch(&planes)?, 0.5)?;
            for c in 0..n_classes {
                let p = &predicted[si][c];
                let g = &truth[0][c];
                dice_sum[c] += dsc(p, g, cfg.epsilon)?;
                let mut rng = Rng::seed_from_u64(0x5ed0_0000 ^ slice_counter);
                if let Some(hd) = hausdorff(p, g, cfg.spacing, &mut rng)? {
                    hd_sum[c] += hd;
                    hd_defined[c] += 1;
                }
            }
            n_slices += 1;
            slice_counter += 1;
        }
    }

    let classes = class_names
        .iter()
        .enumerate()
        .map(|(c, name)| ClassMetrics {
            class: String::from(*name),
            dice: dice_sum[c] / n_slices as f64,
            hausdorff: (hd_defined[c] > 0).then(|| hd_sum[c] / hd_defined[c] as f64),
            n_slices,
            n_hd_undefined: n_slices - hd_defined[c],
        })
        .collect();
    Ok(MetricsReport { classes })
}

/// Run inference over a volume in bounded chunks, so evaluation never holds
/// a whole sample's forward activations at once. Outputs are identical to a
/// single-batch forward: every operation acts per sample.
pub fn forward_volume(model: &Model<f32>, volume: &Volume, chunk: usize) -> Result<Tensor<f32>> {
    let batch = assemble_input(volume)?;
    let (slices, h, w, c) = batch.dims4()?;
    let chunk = chunk.max(1);
    let mut data = Vec::with_capacity(slices * h * w * model.config().output_channels);
    let plane = h * w * c;
    let mut start = 0;
    while start < slices {
        let end = (start + chunk).min(slices);
        let part = Tensor::new(
            [end - start, h, w, c],
            batch.data()[start * plane..end * plane].to_vec(),
        )?;
        let probs = model.forward(&part)?;
        data.extend_from_slice(probs.data());
        start = end;
    }
    Tensor::new([slices, h, w, model.config().output_channels], data)
}

/// Stack a volume's normalized image slices into a `[S,H,W,1]` batch.
pub fn assemble_input(volume: &Volume) -> Result<Tensor<f32>> {
    volume.validate()?;
    if volume.images.is_empty() {
        return Err(Error::Data(format!("volume {} has no slices", volume.id)));
    }
    let h = volume.images[0].height;
    let w = volume.images[0].width;
    let mut data = Vec::with_capacity(volume.images.len() * h * w);
    for image in &volume.images {
        let normalized = normalize01(image);
        data.extend_from_slice(&normalized.data);
    }
    Tensor::new([volume.images.len(), h, w, 1], data)
}

/// Stack a volume's encoded label slices into a `[S,H,W,3]` batch.
pub fn assemble_target(volume: &Volume, labels: &LabelMap) -> Result<Tensor<f32>> {
    volume.validate()?;
    if volume.masks.is_empty() {
        return Err(Error::Data(format!("volume {} has no slices", volume.id)));
    }
    let h = volume.masks[0].height;
    let w = volume.masks[0].width;
    let n_classes = labels.class_names().len();
    let mut data = Vec::with_capacity(volume.masks.len() * h * w * n_classes);
    for mask in &volume.masks {
        let encoded = encode_labels(mask, labels)?;
        data.extend_from_slice(encoded.data());
    }
    Tensor::new([volume.masks.len(), h, w, n_classes], data)
}

fn planes_as_batch(planes: &Tensor<f32>) -> Result<Tensor<f32>> {
    let shape = planes.shape();
    let [h, w, c] = *shape else {
        return Err(Error::Shape(format!(
            "expected [H,W,C] planes, got {shape:?}"
        )));
    };
    Tensor::new([1, h, w, c], planes.data().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from(rows: &[&str]) -> BinaryMask {
        let h = rows.len();
        let w = rows[0].len();
        let mut m = BinaryMask::new(h, w);
        for (y, row) in rows.iter().enumerate() {
            for (x, ch) in row.chars().enumerate() {
                if ch == '#' {
                    m.set(y, x, true);
                }
            }
        }
        m
    }

    #[test]
    fn dsc_identical_masks() {
        let m = mask_from(&["##..", "##..", "....", "...."]);
        let d = dsc(&m, &m, 1e-6).unwrap();
        assert!((d - 1.0).abs() < 1e-6);
    }

    #[test]
    fn dsc_disjoint_masks() {
        let a = mask_from(&["##..", "....", "....", "...."]);
        let b = mask_from(&["....", "....", "..##", "...."]);
        let d = dsc(&a, &b, 1e-6).unwrap();
        assert!(d < 1e-6);
    }

    #[test]
    fn dsc_counted_block_overlap() {
        // 3x3 block vs 2x3 block overlapping in 6 pixels: 12/15.
        let a = mask_from(&["###..", "###..", "###..", ".....", "....."]);
        let b = mask_from(&["###..", "###..", ".....", ".....", "....."]);
        let d = dsc(&a, &b, 1e-9).unwrap();
        assert!((d - 0.8).abs() < 1e-9, "{d}");
    }

    #[test]
    fn dsc_is_symmetric() {
        let a = mask_from(&["#...", ".##.", "....", "...#"]);
        let b = mask_from(&["##..", ".#..", "....", "...."]);
        assert_eq!(dsc(&a, &b, 1e-6).unwrap(), dsc(&b, &a, 1e-6).unwrap());
    }

    #[test]
    fn dsc_dimension_mismatch() {
        let a = BinaryMask::new(4, 4);
        let b = BinaryMask::new(4, 5);
        assert!(dsc(&a, &b, 1e-6).is_err());
    }

    #[test]
    fn hausdorff_identical_is_zero() {
        let m = mask_from(&["....", ".##.", ".##.", "...."]);
        let mut rng = Rng::seed_from_u64(1);
        assert_eq!(hausdorff(&m, &m, 1.0, &mut rng).unwrap(), Some(0.0));
    }

    #[test]
    fn hausdorff_three_four_five() {
        let mut a = BinaryMask::new(8, 8);
        a.set(0, 0, true);
        let mut b = BinaryMask::new(8, 8);
        b.set(3, 4, true);
        let mut rng = Rng::seed_from_u64(2);
        assert_eq!(hausdorff(&a, &b, 1.0, &mut rng).unwrap(), Some(5.0));
    }

    #[test]
    fn hausdorff_outer_max_keeps_far_point() {
        let mut a = BinaryMask::new(12, 12);
        a.set(0, 0, true);
        let mut b = BinaryMask::new(12, 12);
        b.set(0, 0, true);
        b.set(10, 0, true);
        let mut rng = Rng::seed_from_u64(3);
        // Directed distances are 0 and 10; the symmetric form takes the max.
        assert_eq!(hausdorff(&a, &b, 1.0, &mut rng).unwrap(), Some(10.0));
        assert_eq!(hausdorff_naive(&a, &b, 1.0).unwrap(), Some(10.0));
    }

    #[test]
    fn hausdorff_empty_is_undefined() {
        let empty = BinaryMask::new(4, 4);
        let full = mask_from(&["####", "####", "####", "####"]);
        let mut rng = Rng::seed_from_u64(4);
        assert_eq!(hausdorff(&empty, &full, 1.0, &mut rng).unwrap(), None);
        assert_eq!(hausdorff(&full, &empty, 1.0, &mut rng).unwrap(), None);
    }

    #[test]
    fn early_break_equals_naive_on_random_masks() {
        let mut rng = Rng::seed_from_u64(99);
        for trial in 0..200 {
            let h = 2 + rng.below(31);
            let w = 2 + rng.below(31);
            let density = rng.uniform(0.02, 0.4);
            let mut a = BinaryMask::new(h, w);
            let mut b = BinaryMask::new(h, w);
            for y in 0..h {
                for x in 0..w {
                    if rng.next_f64() < density {
                        a.set(y, x, true);
                    }
                    if rng.next_f64() < density {
                        b.set(y, x, true);
                    }
                }
            }
            let fast = hausdorff(&a, &b, 1.0, &mut rng).unwrap();
            let naive = hausdorff_naive(&a, &b, 1.0).unwrap();
            assert_eq!(fast, naive, "trial {trial}");
        }
    }

    #[test]
    fn hausdorff_is_symmetric_in_arguments() {
        let a = mask_from(&["#....", ".....", "..##.", ".....", "....."]);
        let b = mask_from(&[".....", ".#...", ".....", "...#.", "....."]);
        let mut r1 = Rng::seed_from_u64(5);
        let mut r2 = Rng::seed_from_u64(5);
        assert_eq!(
            hausdorff(&a, &b, 1.0, &mut r1).unwrap(),
            hausdorff(&b, &a, 1.0, &mut r2).unwrap()
        );
    }

    #[test]
    fn hausdorff_zero_iff_equal() {
        let a = mask_from(&["#..", ".#.", "..."]);
        let mut b = a.clone();
        let mut rng = Rng::seed_from_u64(6);
        assert_eq!(hausdorff(&a, &b, 1.0, &mut rng).unwrap(), Some(0.0));
        b.set(2, 2, true);
        assert!(hausdorff(&a, &b, 1.0, &mut rng).unwrap().unwrap() > 0.0);
    }

    #[test]
    fn translation_invariance() {
        let a = mask_from(&["##...", "##...", ".....", ".....", "....."]);
        let b = mask_from(&[".....", ".....", "...#.", ".....", "....."]);
        let shift = |m: &BinaryMask| {
            let mut out = BinaryMask::new(m.height(), m.width());
            for (y, x) in m.foreground() {
                out.set(y as usize + 1, x as usize + 1, true);
            }
            out
        };
        let mut r1 = Rng::seed_from_u64(7);
        let mut r2 = Rng::seed_from_u64(7);
        assert_eq!(
            hausdorff(&a, &b, 1.0, &mut r1).unwrap(),
            hausdorff(&shift(&a), &shift(&b), 1.0, &mut r2).unwrap()
        );
        assert_eq!(
            dsc(&a, &b, 1e-6).unwrap(),
            dsc(&shift(&a), &shift(&b), 1e-6).unwrap()
        );
    }

    #[test]
    fn threshold_boundary_is_inclusive() {
        let probs = Tensor::full([1, 2, 2, 3], 0.5f32);
        let masks = threshold(&probs, 0.5).unwrap();
        assert!(masks[0].iter().all(|m| m.count() == 4));
        let probs = Tensor::full([1, 2, 2, 3], 0.49f32);
        let masks = threshold(&probs, 0.5).unwrap();
        assert!(masks[0].iter().all(|m| m.is_empty()));
    }

    #[test]
    fn evaluate_perfect_prediction_and_determinism() {
        use crate::model::{Model, ModelConfig};
        use crate::preprocess::{Grid, Volume};

        // Zero every weight and pin the head bias so the network emits
        // p = (1, 0, 0) at every pixel.
        let cfg = ModelConfig {
            input_height: 8,
            input_width: 8,
            encoder: alloc::vec![2, 3, 4],
            bottleneck: 8,
            decoder: alloc::vec![3, 2],
            ..ModelConfig::default()
        };
        let mut model = Model::<f32>::build(cfg).unwrap();
        for p in model.params_mut() {
            for v in p.value.data_mut() {
                *v = 0.0;
            }
            if p.name == "head.bias" {
                p.value.data_mut().copy_from_slice(&[10.0, -10.0, -10.0]);
            }
        }

        // Ground truth labels everything NTC, matching the prediction.
        let volume = Volume {
            id: "one".into(),
            images: alloc::vec![Grid::new(8, 8, 0.5f32)],
            masks: alloc::vec![Grid::new(8, 8, 1u8)],
        };
        let labels = LabelMap::default();
        let report = evaluate(
            &model,
            core::slice::from_ref(&volume),
            &labels,
            &EvalConfig::default(),
        )
        .unwrap();
        for c in &report.classes {
            assert!((c.dice - 1.0).abs() < 1e-6, "{}: {}", c.class, c.dice);
        }
        assert_eq!(report.classes[0].hausdorff, Some(0.0));
        // ED and ET are empty-vs-empty: perfect dice, undefined distance.
        assert_eq!(report.classes[1].hausdorff, None);
        assert_eq!(report.classes[1].n_hd_undefined, 1);

        // Determinism: repeated evaluation yields an identical report.
        let again = evaluate(&model, &[volume], &labels, &EvalConfig::default()).unwrap();
        for (a, b) in report.classes.iter().zip(&again.classes) {
            assert_eq!(a.dice.to_bits(), b.dice.to_bits());
            assert_eq!(a.hausdorff, b.hausdorff);
        }

        // An empty split is an error.
        assert!(evaluate(&model, &[], &labels, &EvalConfig::default()).is_err());
    }

    #[test]
    fn chunked_forward_matches_single_batch() {
        use crate::model::{Model, ModelConfig};
        use crate::preprocess::{Grid, Volume};
        let cfg = ModelConfig {
            input_height: 8,
            input_width: 8,
            encoder: alloc::vec![2, 3, 4],
            bottleneck: 8,
            decoder: alloc::vec![3, 2],
            ..ModelConfig::default()
        };
        let model = Model::<f32>::build(cfg).unwrap();
        let volume = Volume {
            id: "v".into(),
            images: (0..5).map(|i| Grid::new(8, 8, 0.1 * i as f32)).collect(),
            masks: alloc::vec![Grid::new(8, 8, 0u8); 5],
        };
        let whole = model.forward(&assemble_input(&volume).unwrap()).unwrap();
        let chunked = forward_volume(&model, &volume, 2).unwrap();
        assert_eq!(whole.data(), chunked.data());
        assert_eq!(whole.shape(), chunked.shape());
    }

    #[test]
    fn threshold_matches_elementwise_oracle() {
        let mut rng = Rng::seed_from_u64(8);
        let data: Vec<f32> = (0..2 * 4 * 4 * 3).map(|_| rng.next_f64() as f32).collect();
        let probs = Tensor::new([2, 4, 4, 3], data.to_vec()).unwrap();
        let masks = threshold(&probs, 0.5).unwrap();
        for bi in 0..2 {
            for c in 0..3 {
                for y in 0..4 {
                    for x in 0..4 {
                        let expected = data[((bi * 4 + y) * 4 + x) * 3 + c] >= 0.5;
                        assert_eq!(masks[bi][c].get(y, x), expected);
                    }
                }
            }
        }
    }
}
