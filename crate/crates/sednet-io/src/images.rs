//! Minimal binary PGM/PPM emission for masks and overlays.

use std::path::Path;

use sednet_core::metrics::BinaryMask;
use sednet_core::preprocess::Grid;

use crate::error::Result;
use crate::volume_file::write_atomic;

/// 8-bit binary portable graymap (P5).
pub fn write_pgm(path: &Path, image: &Grid<u8>) -> Result<()> {
    let mut bytes = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    bytes.extend_from_slice(&image.data);
    write_atomic(path, &bytes)
}

/// 8-bit binary portable pixmap (P6); `rgb` is row-major RGB triples.
pub fn write_ppm(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    debug_assert_eq!(rgb.len(), width * height * 3);
    let mut bytes = format!("P6\n{width} {height}\n255\n").into_bytes();
    bytes.extend_from_slice(rgb);
    write_atomic(path, &bytes)
}

pub fn mask_to_gray(mask: &BinaryMask) -> Grid<u8> {
    let mut out = Grid::new(mask.height(), mask.width(), 0u8);
    for (y, x) in mask.foreground() {
        out.set(y as usize, x as usize, 255);
    }
    out
}

pub fn gray_from_unit_image(image: &Grid<f32>) -> Grid<u8> {
    Grid {
        height: image.height,
        width: image.width,
        data: image
            .data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0) as u8)
            .collect(),
    }
}

/// Blend per-class masks over a grayscale base: NTC red, ED green, ET blue.
pub fn overlay_rgb(base: &Grid<f32>, class_masks: &[BinaryMask]) -> Vec<u8> {
    const COLORS: [[f32; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let (h, w) = (base.height, base.width);
    let mut rgb = vec![0u8; h * w * 3];
    for y in 0..h {
        for x in 0..w {
            let gray = base.get(y, x).clamp(0.0, 1.0);
            let mut px = [gray, gray, gray];
            for (mask, color) in class_masks.iter().zip(COLORS) {
                if mask.get(y, x) {
                    for (p, c) in px.iter_mut().zip(color) {
                        *p = 0.45 * *p + 0.55 * c;
                    }
                }
            }
            let at = (y * w + x) * 3;
            for (i, p) in px.iter().enumerate() {
                rgb[at + i] = (p * 255.0) as u8;
            }
        }
    }
    rgb
}
