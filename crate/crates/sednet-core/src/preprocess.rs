//! Training-data preprocessing: slice filtering in three phases, plus the
//! normalization and label encoding applied to every split.
//!
//! Phase 1 drops empty and sub-threshold tumor slices (judged on the
//! morphologically cleaned ground-truth mask), phase 2 finds the minimum
//! surviving slice count across samples, and phase 3 truncates every sample
//! to that count. Test-time preprocessing applies only resize, unit-range
//! normalization, and three-channel label encoding.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::metrics::BinaryMask;
use crate::scalar::floor32;
use crate::tensor::Tensor;

/// Dense 2D plane of image intensities or label codes.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Copy> Grid<T> {
    pub fn new(height: usize, width: usize, fill: T) -> Self {
        Grid {
            height,
            width,
            data: vec![fill; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "grid {height}x{width} implies {} elements, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Grid {
            height,
            width,
            data,
        })
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: T) {
        self.data[y * self.width + x] = v;
    }
}

pub type ImageSlice = Grid<f32>;
pub type MaskSlice = Grid<u8>;

/// One patient sample: aligned stacks of image and label slices.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    pub id: String,
    pub images: Vec<ImageSlice>,
    pub masks: Vec<MaskSlice>,
}

impl Volume {
    pub fn validate(&self) -> Result<()> {
        if self.images.len() != self.masks.len() {
            return Err(Error::Data(format!(
                "volume {}: {} image slices vs {} mask slices",
                self.id,
                self.images.len(),
                self.masks.len()
            )));
        }
        for (i, (img, mask)) in self.images.iter().zip(&self.masks).enumerate() {
            if (img.height, img.width) != (mask.height, mask.width) {
                return Err(Error::Data(format!(
                    "volume {} slice {i}: image {}x{} vs mask {}x{}",
                    self.id, img.height, img.width, mask.height, mask.width
                )));
            }
        }
        Ok(())
    }

    pub fn slice_count(&self) -> usize {
        self.images.len()
    }
}

/// Label-code to channel mapping; channel order is NTC, ED, ET.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LabelMap {
    pub codes: [u8; 3],
}

impl Default for LabelMap {
    fn default() -> Self {
        LabelMap { codes: [1, 2, 4] }
    }
}

impl LabelMap {
    pub fn class_names(&self) -> [&'static str; 3] {
        ["ntc", "ed", "et"]
    }

    pub fn channel_of(&self, code: u8) -> Option<usize> {
        self.codes.iter().position(|&c| c == code)
    }
}

/// Knobs for the three filtering phases.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PreprocessConfig {
    /// Square output extent for both images and masks.
    pub target_size: usize,
    pub open_kernel: usize,
    pub close_kernel: usize,
    pub close_repeats: usize,
    /// Slices whose cleaned tumor area is `<=` this are dropped.
    pub area_threshold: usize,
    pub apply_phase2_3: bool,
    /// Truncate to a centered window instead of the leading slices.
    pub centered_truncation: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            target_size: 128,
            open_kernel: 3,
            close_kernel: 3,
            close_repeats: 2,
            area_threshold: 64,
            apply_phase2_3: true,
            centered_truncation: false,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target_size == 0 {
            return Err(Error::Config("target size must be positive".into()));
        }
        if self.open_kernel.is_multiple_of(2) || self.close_kernel.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "morphology kernels must be odd, got open {} close {}",
                self.open_kernel, self.close_kernel
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Morphology (flat square structuring element, out-of-bounds = background).

pub fn erode(mask: &BinaryMask, kernel: usize) -> BinaryMask {
    debug_assert!(kernel % 2 == 1);
    let r = (kernel / 2) as isize;
    let (h, w) = (mask.height(), mask.width());
    let mut out = BinaryMask::new(h, w);
    for y in 0..h {
        for x in 0..w {
            let mut all = true;
            'window: for dy in -r..=r {
                for dx in -r..=r {
                    let (ny, nx) = (y as isize + dy, x as isize + dx);
                    if ny < 0
                        || nx < 0
                        || ny >= h as isize
                        || nx >= w as isize
                        || !mask.get(ny as usize, nx as usize)
                    {
                        all = false;
                        break 'window;
                    }
                }
            }
            out.set(y, x, all);
        }
    }
    out
}

pub fn dilate(mask: &BinaryMask, kernel: usize) -> BinaryMask {
    debug_assert!(kernel % 2 == 1);
    let r = (kernel / 2) as isize;
    let (h, w) = (mask.height(), mask.width());
    let mut out = BinaryMask::new(h, w);
    for y in 0..h {
        for x in 0..w {
            let mut any = false;
            for dy in -r..=r {
                for dx in -r..=r {
                    let (ny, nx) = (y as isize + dy, x as isize + dx);
                    if ny >= 0
                        && nx >= 0
                        && ny < h as isize
                        && nx < w as isize
                        && mask.get(ny as usize, nx as usize)
                    {
                        any = true;
                    }
                }
            }
            out.set(y, x, any);
        }
    }
    out
}

/// Erosion then dilation: removes speckle smaller than the kernel.
pub fn morph_open(mask: &BinaryMask, kernel: usize) -> BinaryMask {
    dilate(&erode(mask, kernel), kernel)
}

/// Dilation then erosion, `repeats` times: fills holes smaller than the
/// kernel.
pub fn morph_close(mask: &BinaryMask, kernel: usize, repeats: usize) -> BinaryMask {
    let mut out = mask.clone();
    for _ in 0..repeats {
        out = erode(&dilate(&out, kernel), kernel);
    }
    out
}

/// Areas of the 8-connected foreground components.
pub fn connected_components(mask: &BinaryMask) -> Vec<usize> {
    let (h, w) = (mask.height(), mask.width());
    let mut seen = BinaryMask::new(h, w);
    let mut areas = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(y, x) || seen.get(y, x) {
                continue;
            }
            let mut area = 0usize;
            let mut queue = VecDeque::new();
            queue.push_back((y, x));
            seen.set(y, x, true);
            while let Some((cy, cx)) = queue.pop_front() {
                area += 1;
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        let (ny, nx) = (cy as isize + dy, cx as isize + dx);
                        if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                            continue;
                        }
                        let (ny, nx) = (ny as usize, nx as usize);
                        if mask.get(ny, nx) && !seen.get(ny, nx) {
                            seen.set(ny, nx, true);
                            queue.push_back((ny, nx));
                        }
                    }
                }
            }
            areas.push(area);
        }
    }
    areas
}

// ---------------------------------------------------------------------------
// Resizing.

/// Bilinear resampling with half-pixel centers; identity when the size
/// already matches.
pub fn resize_bilinear(image: &Grid<f32>, th: usize, tw: usize) -> Grid<f32> {
    if (image.height, image.width) == (th, tw) {
        return image.clone();
    }
    let mut out = Grid::new(th, tw, 0.0f32);
    let sy = image.height as f32 / th as f32;
    let sx = image.width as f32 / tw as f32;
    for y in 0..th {
        let fy = ((y as f32 + 0.5) * sy - 0.5).clamp(0.0, (image.height - 1) as f32);
        let y0 = floor32(fy) as usize;
        let y1 = (y0 + 1).min(image.height - 1);
        let wy = fy - y0 as f32;
        for x in 0..tw {
            let fx = ((x as f32 + 0.5) * sx - 0.5).clamp(0.0, (image.width - 1) as f32);
            let x0 = floor32(fx) as usize;
            let x1 = (x0 + 1).min(image.width - 1);
            let wx = fx - x0 as f32;
            let top = image.get(y0, x0) * (1.0 - wx) + image.get(y0, x1) * wx;
            let bottom = image.get(y1, x0) * (1.0 - wx) + image.get(y1, x1) * wx;
            out.set(y, x, top * (1.0 - wy) + bottom * wy);
        }
    }
    out
}

/// Nearest-neighbor resampling; the only resize applied to label masks so
/// codes stay exact.
pub fn resize_nearest<T: Copy>(grid: &Grid<T>, th: usize, tw: usize) -> Grid<T> {
    if (grid.height, grid.width) == (th, tw) {
        return grid.clone();
    }
    let first = grid.data[0];
    let mut out = Grid::new(th, tw, first);
    let sy = grid.height as f32 / th as f32;
    let sx = grid.width as f32 / tw as f32;
    for y in 0..th {
        let iy = (floor32((y as f32 + 0.5) * sy) as usize).min(grid.height - 1);
        for x in 0..tw {
            let ix = (floor32((x as f32 + 0.5) * sx) as usize).min(grid.width - 1);
            out.set(y, x, grid.get(iy, ix));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Per-slice transforms.

/// Affine rescale to `[0, 1]`; a constant slice maps to all zeros.
pub fn normalize01(image: &Grid<f32>) -> Grid<f32> {
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for &v in &image.data {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    // Constant (or all-equal) slices map to zeros.
    if hi <= lo {
        return Grid::new(image.height, image.width, 0.0);
    }
    let scale = 1.0 / (hi - lo);
    Grid {
        height: image.height,
        width: image.width,
        data: image.data.iter().map(|&v| (v - lo) * scale).collect(),
    }
}

/// Expand integer label codes into three binary channels (NTC, ED, ET).
pub fn encode_labels(mask: &MaskSlice, labels: &LabelMap) -> Result<Tensor<f32>> {
    let mut out = Tensor::zeros([mask.height, mask.width, 3]);
    let data = out.data_mut();
    for (i, &code) in mask.data.iter().enumerate() {
        if code == 0 {
            continue;
        }
        match labels.channel_of(code) {
            Some(c) => data[i * 3 + c] = 1.0,
            None => {
                return Err(Error::Validation(format!(
                    "unknown label code {code} (mapping: {:?})",
                    labels.codes
                )))
            }
        }
    }
    Ok(out)
}

/// Binarize a label mask: any nonzero code is tumor.
pub fn binarize_mask(mask: &MaskSlice) -> BinaryMask {
    let mut out = BinaryMask::new(mask.height, mask.width);
    for y in 0..mask.height {
        for x in 0..mask.width {
            if mask.get(y, x) != 0 {
                out.set(y, x, true);
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Phase 1: drop empty and sub-threshold slices.

/// Outcome of the slice filter for one volume.
#[derive(Clone, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Phase1Report {
    /// Original indices of the surviving slices, ascending.
    pub kept: Vec<usize>,
    /// Post-morphology tumor area per original slice.
    pub areas: Vec<usize>,
}

/// Decide which slices survive: resize the mask, binarize, open, close, then
/// drop slices that are empty or whose total component area is `<= T`.
pub fn phase1_filter(volume: &Volume, cfg: &PreprocessConfig) -> Result<Phase1Report> {
    cfg.validate()?;
    volume.validate()?;
    if volume.slice_count() == 0 {
        return Err(Error::Data(format!("volume {} is empty", volume.id)));
    }
    let mut kept = Vec::new();
    let mut areas = Vec::new();
    for (i, mask) in volume.masks.iter().enumerate() {
        let resized = resize_nearest(mask, cfg.target_size, cfg.target_size);
        let binary = binarize_mask(&resized);
        let opened = morph_open(&binary, cfg.open_kernel);
        let cleaned = morph_close(&opened, cfg.close_kernel, cfg.close_repeats);
        if cleaned.is_empty() {
            areas.push(0);
            continue;
        }
        let area: usize = connected_components(&cleaned).iter().sum();
        areas.push(area);
        if area > cfg.area_threshold {
            kept.push(i);
        }
    }
    Ok(Phase1Report { kept, areas })
}

/// Resize a volume to the target extent and drop the filtered slices.
pub fn apply_phase1(volume: &Volume, cfg: &PreprocessConfig) -> Result<(Volume, Phase1Report)> {
    let report = phase1_filter(volume, cfg)?;
    let images = report
        .kept
        .iter()
        .map(|&i| resize_bilinear(&volume.images[i], cfg.target_size, cfg.target_size))
        .collect();
    let masks = report
        .kept
        .iter()
        .map(|&i| resize_nearest(&volume.masks[i], cfg.target_size, cfg.target_size))
        .collect();
    Ok((
        Volume {
            id: volume.id.clone(),
            images,
            masks,
        },
        report,
    ))
}

// ---------------------------------------------------------------------------
// Phases 2 and 3: equalize slice counts.

/// Minimum surviving slice count across samples.
pub fn phase2_min_count(volumes: &[Volume]) -> Result<usize> {
    if volumes.is_empty() {
        return Err(Error::Data("no volumes to take a minimum over".into()));
    }
    let mut least = usize::MAX;
    for v in volumes {
        if v.slice_count() == 0 {
            return Err(Error::Data(format!(
                "volume {} has no surviving slices",
                v.id
            )));
        }
        least = least.min(v.slice_count());
    }
    Ok(least)
}

/// Keep exactly `least_num` slices, preserving anatomical order. The default
/// keeps the leading slices; `centered` keeps a centered window instead.
pub fn phase3_truncate(volume: &Volume, least_num: usize, centered: bool) -> Result<Volume> {
    volume.validate()?;
    if least_num > volume.slice_count() {
        return Err(Error::Data(format!(
            "volume {} has {} slices, cannot truncate to {least_num}",
            volume.id,
            volume.slice_count()
        )));
    }
    let start = if centered {
        (volume.slice_count() - least_num) / 2
    } else {
        0
    };
    Ok(Volume {
        id: volume.id.clone(),
        images: volume.images[start..start + least_num].to_vec(),
        masks: volume.masks[start..start + least_num].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_of(h: usize, w: usize, fg: &[(usize, usize)]) -> BinaryMask {
        let mut m = BinaryMask::new(h, w);
        for &(y, x) in fg {
            m.set(y, x, true);
        }
        m
    }

    fn rect_mask(h: usize, w: usize, y0: usize, x0: usize, rh: usize, rw: usize) -> MaskSlice {
        let mut m = Grid::new(h, w, 0u8);
        for y in y0..y0 + rh {
            for x in x0..x0 + rw {
                m.set(y, x, 1);
            }
        }
        m
    }

    #[test]
    fn open_removes_isolated_pixel() {
        let m = mask_of(8, 8, &[(3, 3)]);
        assert!(morph_open(&m, 3).is_empty());
    }

    #[test]
    fn open_then_close_preserves_solid_block() {
        let mut m = BinaryMask::new(16, 16);
        for y in 3..13 {
            for x in 3..13 {
                m.set(y, x, true);
            }
        }
        let opened = morph_open(&m, 3);
        assert_eq!(opened, m);
        let closed = morph_close(&opened, 3, 2);
        assert_eq!(closed, m);
    }

    #[test]
    fn close_fills_interior_hole() {
        let mut m = BinaryMask::new(9, 9);
        for y in 2..7 {
            for x in 2..7 {
                m.set(y, x, true);
            }
        }
        m.set(4, 4, false);
        let closed = morph_close(&m, 3, 1);
        assert!(closed.get(4, 4));
        // Oracle: dilate fills, erode restores the boundary of a 5x5 block.
        for y in 2..7 {
            for x in 2..7 {
                assert!(closed.get(y, x), "({y},{x})");
            }
        }
    }

    #[test]
    fn components_count_areas() {
        let m = mask_of(8, 8, &[(0, 0), (0, 1), (1, 0), (5, 5), (6, 6)]);
        let mut areas = connected_components(&m);
        areas.sort_unstable();
        // (5,5) and (6,6) touch diagonally: 8-connectivity merges them.
        assert_eq!(areas, vec![2, 3]);
    }

    #[test]
    fn phase1_drops_empty_slices() {
        let cfg = PreprocessConfig {
            target_size: 16,
            area_threshold: 0,
            ..Default::default()
        };
        let mut volume = Volume {
            id: "s1".into(),
            images: vec![Grid::new(16, 16, 0.0); 10],
            masks: vec![Grid::new(16, 16, 0u8); 10],
        };
        // Give slices 2,3,5,7,8,9 a healthy tumor; leave 0,1,4,6 empty.
        for i in [2usize, 3, 5, 7, 8, 9] {
            volume.masks[i] = rect_mask(16, 16, 4, 4, 6, 6);
        }
        let report = phase1_filter(&volume, &cfg).unwrap();
        assert_eq!(report.kept, vec![2, 3, 5, 7, 8, 9]);
        assert_eq!(report.areas[0], 0);
        assert_eq!(report.areas[2], 36);
    }

    #[test]
    fn phase1_threshold_is_inclusive_drop() {
        // Rectangles survive open/close exactly, so areas are exact.
        let cfg = PreprocessConfig {
            target_size: 32,
            area_threshold: 64,
            ..Default::default()
        };
        let volume = Volume {
            id: "s2".into(),
            images: vec![Grid::new(32, 32, 0.0); 3],
            masks: vec![
                rect_mask(32, 32, 2, 2, 8, 8), // area 64 == T: dropped
                rect_mask(32, 32, 2, 2, 8, 9), // area 72 > T: kept
                rect_mask(32, 32, 2, 2, 5, 6), // area 30 <= T: dropped
            ],
        };
        let report = phase1_filter(&volume, &cfg).unwrap();
        assert_eq!(report.areas, vec![64, 72, 30]);
        assert_eq!(report.kept, vec![1]);
    }

    #[test]
    fn phase1_known_blob_areas() {
        let cfg = PreprocessConfig {
            target_size: 32,
            area_threshold: 64,
            ..Default::default()
        };
        let volume = Volume {
            id: "s3".into(),
            images: vec![Grid::new(32, 32, 0.0); 3],
            masks: vec![
                Grid::new(32, 32, 0u8),          // area 0
                rect_mask(32, 32, 1, 1, 5, 6),   // area 30
                rect_mask(32, 32, 4, 4, 10, 20), // area 200
            ],
        };
        let report = phase1_filter(&volume, &cfg).unwrap();
        assert_eq!(report.areas, vec![0, 30, 200]);
        assert_eq!(report.kept, vec![2]);
    }

    #[test]
    fn phase1_is_idempotent() {
        let cfg = PreprocessConfig {
            target_size: 32,
            area_threshold: 64,
            ..Default::default()
        };
        let volume = Volume {
            id: "s4".into(),
            images: (0..5).map(|i| Grid::new(48, 48, i as f32)).collect(),
            masks: vec![
                Grid::new(48, 48, 0u8),
                rect_mask(48, 48, 4, 4, 20, 20),
                rect_mask(48, 48, 8, 8, 3, 3),
                rect_mask(48, 48, 10, 10, 24, 18),
                Grid::new(48, 48, 0u8),
            ],
        };
        let (once, _) = apply_phase1(&volume, &cfg).unwrap();
        let (twice, report) = apply_phase1(&once, &cfg).unwrap();
        assert_eq!(once, twice);
        assert_eq!(report.kept.len(), once.slice_count());
    }

    #[test]
    fn phase1_alignment_survives() {
        let cfg = PreprocessConfig {
            target_size: 16,
            area_threshold: 4,
            ..Default::default()
        };
        let mut volume = Volume {
            id: "s5".into(),
            images: (0..6).map(|i| Grid::new(16, 16, i as f32)).collect(),
            masks: vec![Grid::new(16, 16, 0u8); 6],
        };
        volume.masks[1] = rect_mask(16, 16, 2, 2, 4, 4);
        volume.masks[4] = rect_mask(16, 16, 6, 6, 5, 5);
        let (filtered, report) = apply_phase1(&volume, &cfg).unwrap();
        assert_eq!(report.kept, vec![1, 4]);
        // The image value encodes the original slice index.
        assert_eq!(filtered.images[0].get(0, 0), 1.0);
        assert_eq!(filtered.images[1].get(0, 0), 4.0);
        filtered.validate().unwrap();
    }

    #[test]
    fn phase2_takes_minimum() {
        let make = |id: &str, n: usize| Volume {
            id: id.into(),
            images: vec![Grid::new(4, 4, 0.0); n],
            masks: vec![Grid::new(4, 4, 0u8); n],
        };
        let volumes = vec![make("a", 23), make("b", 40), make("c", 31)];
        assert_eq!(phase2_min_count(&volumes).unwrap(), 23);
        assert_eq!(phase2_min_count(&volumes[..1]).unwrap(), 23);
        let equal = vec![make("a", 7), make("b", 7)];
        assert_eq!(phase2_min_count(&equal).unwrap(), 7);
    }

    #[test]
    fn phase2_names_empty_sample() {
        let volumes = vec![Volume {
            id: "bad-sample".into(),
            images: vec![],
            masks: vec![],
        }];
        let err = phase2_min_count(&volumes).unwrap_err();
        assert!(format!("{err}").contains("bad-sample"));
    }

    #[test]
    fn phase3_keeps_leading_slices() {
        let volume = Volume {
            id: "t".into(),
            images: (0..40).map(|i| Grid::new(4, 4, i as f32)).collect(),
            masks: (0..40).map(|i| Grid::new(4, 4, i as u8)).collect(),
        };
        let cut = phase3_truncate(&volume, 23, false).unwrap();
        assert_eq!(cut.slice_count(), 23);
        assert_eq!(cut.images[22].get(0, 0), 22.0);
        assert_eq!(cut.masks[22].get(0, 0), 22);
        for i in 0..23 {
            assert_eq!(cut.images[i].get(0, 0) as u8, cut.masks[i].get(0, 0));
        }
        // Equal count is the identity.
        let same = phase3_truncate(&cut, 23, false).unwrap();
        assert_eq!(same, cut);
        assert!(phase3_truncate(&cut, 24, false).is_err());
    }

    #[test]
    fn normalize_examples() {
        let g = Grid::from_vec(1, 3, vec![0.0f32, 50.0, 100.0]).unwrap();
        assert_eq!(normalize01(&g).data, vec![0.0, 0.5, 1.0]);

        let constant = Grid::new(2, 2, 7.0f32);
        assert!(normalize01(&constant).data.iter().all(|&v| v == 0.0));

        let negative = Grid::from_vec(1, 4, vec![-8.0f32, -2.0, 0.0, 4.0]).unwrap();
        let n = normalize01(&negative);
        assert!(n.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(n.data[0], 0.0);
        assert_eq!(n.data[3], 1.0);
    }

    #[test]
    fn encode_label_codes() {
        let labels = LabelMap::default();
        let mut mask = Grid::new(1, 4, 0u8);
        mask.set(0, 1, 2);
        mask.set(0, 2, 1);
        mask.set(0, 3, 4);
        let t = encode_labels(&mask, &labels).unwrap();
        assert_eq!(&t.data()[0..3], [0.0, 0.0, 0.0]);
        assert_eq!(&t.data()[3..6], [0.0, 1.0, 0.0]);
        assert_eq!(&t.data()[6..9], [1.0, 0.0, 0.0]);
        assert_eq!(&t.data()[9..12], [0.0, 0.0, 1.0]);
    }

    #[test]
    fn encode_rejects_unknown_code() {
        let labels = LabelMap::default();
        let mut mask = Grid::new(1, 1, 0u8);
        mask.set(0, 0, 3);
        let err = encode_labels(&mask, &labels).unwrap_err();
        assert!(format!("{err}").contains('3'));
    }

    #[test]
    fn encode_channel_sums_match_counting_oracle() {
        let labels = LabelMap::default();
        let mut rng = crate::rng::Rng::seed_from_u64(17);
        let codes = [0u8, 1, 2, 4];
        let data: Vec<u8> = (0..64).map(|_| codes[rng.below(4)]).collect();
        let mask = Grid::from_vec(8, 8, data.clone()).unwrap();
        let t = encode_labels(&mask, &labels).unwrap();
        for (c, &code) in [1u8, 2, 4].iter().enumerate() {
            let expected = data.iter().filter(|&&v| v == code).count() as f32;
            let got: f32 = t.data().iter().skip(c).step_by(3).sum();
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn nearest_resize_preserves_label_codes() {
        let mut mask = Grid::new(10, 10, 0u8);
        for y in 2..8 {
            for x in 2..8 {
                mask.set(y, x, 4);
            }
        }
        let resized = resize_nearest(&mask, 16, 16);
        assert!(resized.data.iter().all(|&v| v == 0 || v == 4));
        let back = resize_nearest(&resized, 10, 10);
        assert!(back.data.iter().all(|&v| v == 0 || v == 4));
    }

    #[test]
    fn bilinear_identity_when_size_matches() {
        let g = Grid::from_vec(2, 2, vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(resize_bilinear(&g, 2, 2), g);
    }
}
