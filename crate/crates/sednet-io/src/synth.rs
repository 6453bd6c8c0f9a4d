//! Desk-scale synthetic dataset generator.
//!
//! Each slice carries a smooth background plus up to three elliptical tumor
//! regions with nested label structure: an enhancing core (ET) inside a
//! non-enhancing core (NTC) inside an edema ring (ED). Image intensity
//! correlates with the labels, some slices are intentionally empty, and the
//! whole dataset is a pure function of the seed.

use sednet_core::preprocess::{Grid, Volume};
use sednet_core::rng::Rng;

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub n_samples: usize,
    pub slices_per_sample: usize,
    /// Square slice extent in pixels.
    pub size: usize,
    /// Probability that a slice carries no tumor at all.
    pub empty_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_samples: 10,
            slices_per_sample: 20,
            size: 64,
            empty_rate: 0.25,
            seed: 0,
        }
    }
}

/// Axis-aligned ellipse; the three label zones are concentric fractions of
/// its radii.
#[derive(Clone, Copy, Debug)]
pub struct Region {
    pub cy: f64,
    pub cx: f64,
    pub ry: f64,
    pub rx: f64,
}

/// Zone radius fractions: ET core, NTC shell, ED rim.
const ET_FRACTION: f64 = 0.4;
const NTC_FRACTION: f64 = 0.7;

impl Region {
    /// Normalized squared distance from the centre (1.0 on the ED rim).
    fn level(&self, y: f64, x: f64) -> f64 {
        let dy = (y - self.cy) / self.ry;
        let dx = (x - self.cx) / self.rx;
        dy * dy + dx * dx
    }

    /// Label code at a pixel, if inside this region.
    fn code(&self, y: f64, x: f64) -> Option<u8> {
        let level = self.level(y, x);
        if level <= ET_FRACTION * ET_FRACTION {
            Some(4)
        } else if level <= NTC_FRACTION * NTC_FRACTION {
            Some(1)
        } else if level <= 1.0 {
            Some(2)
        } else {
            None
        }
    }

    pub fn inside_ntc(&self, y: f64, x: f64) -> bool {
        self.level(y, x) <= NTC_FRACTION * NTC_FRACTION
    }

    pub fn inside_ed(&self, y: f64, x: f64) -> bool {
        self.level(y, x) <= 1.0
    }
}

/// The tumor geometry of one slice; empty slices have no regions.
pub fn slice_regions(cfg: &SynthConfig, sample: usize, slice: usize) -> Vec<Region> {
    let root = Rng::seed_from_u64(cfg.seed);
    let mut rng = root.fork(sample as u64).fork(slice as u64 ^ 0x51ce);
    if rng.next_f64() < cfg.empty_rate {
        return Vec::new();
    }
    let s = cfg.size as f64;
    let n_regions = 1 + rng.below(3);
    (0..n_regions)
        .map(|_| {
            let ry = rng.uniform(0.10, 0.22) * s;
            let rx = ry * rng.uniform(0.8, 1.25);
            Region {
                cy: rng.uniform(0.25, 0.75) * s,
                cx: rng.uniform(0.25, 0.75) * s,
                ry,
                rx,
            }
        })
        .collect()
}

fn render_slice(cfg: &SynthConfig, sample: usize, slice: usize) -> (Grid<f32>, Grid<u8>) {
    let size = cfg.size;
    let regions = slice_regions(cfg, sample, slice);
    let root = Rng::seed_from_u64(cfg.seed);
    let mut noise = root.fork(sample as u64).fork(slice as u64 ^ 0x401e);
    let (py, px) = (noise.uniform(0.0, 6.0), noise.uniform(0.0, 6.0));

    let mut image = Grid::new(size, size, 0.0f32);
    let mut mask = Grid::new(size, size, 0u8);
    for y in 0..size {
        for x in 0..size {
            let (fy, fx) = (y as f64, x as f64);
            // Smooth anatomical background plus scanner-like noise.
            let background = 0.25
                + 0.08 * ((fy / size as f64) * 6.0 + py).sin()
                + 0.08 * ((fx / size as f64) * 6.0 + px).cos();
            // Innermost zone across regions wins.
            let mut code = 0u8;
            let mut brightness = 0.0f64;
            for region in &regions {
                if let Some(c) = region.code(fy, fx) {
                    let rank = |c: u8| match c {
                        4 => 3,
                        1 => 2,
                        _ => 1,
                    };
                    if rank(c) > rank(code) {
                        code = c;
                        brightness = match c {
                            4 => 0.62,
                            1 => 0.42,
                            _ => 0.22,
                        };
                    }
                }
            }
            let value = background + brightness + noise.uniform(-0.02, 0.02);
            image.set(y, x, value as f32);
            mask.set(y, x, code);
        }
    }
    (image, mask)
}

/// Generate the full dataset; bit-identical for a fixed config.
pub fn generate(cfg: &SynthConfig) -> Vec<Volume> {
    (0..cfg.n_samples)
        .map(|sample| {
            let mut images = Vec::with_capacity(cfg.slices_per_sample);
            let mut masks = Vec::with_capacity(cfg.slices_per_sample);
            for slice in 0..cfg.slices_per_sample {
                let (image, mask) = render_slice(cfg, sample, slice);
                images.push(image);
                masks.push(mask);
            }
            Volume {
                id: format!("synth-{sample:03}"),
                images,
                masks,
            }
        })
        .collect()
}
