//! Synthetic desk-scale corpus: warm textured objects on cool noisy
//! backgrounds.
//!
//! Real detection datasets are too heavy for a CPU test loop, so training
//! and the regression suite run on generated scenes instead. Backgrounds are
//! gradients from a cool palette with per-pixel noise; objects are solid or
//! checkered rectangles and ellipses from a warm palette. The two palettes
//! do not overlap, which is what makes the task learnable by a small model
//! in minutes, while noise, textures, shape boundaries, and object overlap
//! keep it from being trivial.
//!
//! Every sample is drawn on its own ChaCha stream (`seed` selects the key,
//! `stream_offset + index` the stream), so sample `i` has identical bytes no
//! matter how many samples are requested or in what order, and disjoint
//! offsets give non-overlapping train and validation sets from one seed.

use crate::grid::{PatchGrid, TokenLabelMap};
use crate::labeling::{label_from_mask, BoundingBox, LabelingError, SegMask};
use crate::ppm::RgbImage;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

const COOL_PALETTE: [[u8; 3]; 5] = [
    [40, 60, 110],
    [70, 100, 150],
    [60, 110, 90],
    [90, 110, 120],
    [50, 80, 70],
];

const WARM_PALETTE: [[u8; 3]; 5] = [
    [220, 70, 50],
    [240, 140, 40],
    [250, 210, 60],
    [230, 90, 130],
    [200, 60, 30],
];

#[derive(Debug, Clone)]
pub struct SynthConfig {
    /// Square image edge in pixels; must be a multiple of `patch_size`.
    pub image_size: u32,
    pub patch_size: u32,
    pub count: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    pub seed: u64,
    /// First ChaCha stream index; sample `i` uses `stream_offset + i`.
    pub stream_offset: u64,
    /// A patch is foreground when strictly more than this fraction of its
    /// pixels belong to an object.
    pub mask_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            image_size: 128,
            patch_size: 16,
            count: 16,
            min_objects: 1,
            max_objects: 3,
            seed: 7,
            stream_offset: 0,
            mask_fraction: 0.10,
        }
    }
}

/// One generated scene with every kind of ground truth the pipeline uses.
#[derive(Debug, Clone)]
pub struct SynthSample {
    pub image: RgbImage,
    pub mask: SegMask,
    pub boxes: Vec<BoundingBox>,
    pub labels: TokenLabelMap,
}

fn jitter(rng: &mut ChaCha8Rng, base: [u8; 3], amount: i32) -> [u8; 3] {
    let mut out = [0u8; 3];
    for (o, b) in out.iter_mut().zip(base) {
        let d = rng.random_range(-amount..=amount);
        *o = (b as i32 + d).clamp(0, 255) as u8;
    }
    out
}

fn pick_jittered(rng: &mut ChaCha8Rng, palette: &[[u8; 3]], amount: i32) -> [u8; 3] {
    let idx = rng.random_range(0..palette.len());
    jitter(rng, palette[idx], amount)
}

fn add_noise(rng: &mut ChaCha8Rng, rgb: [u8; 3], amount: i32) -> [u8; 3] {
    let d = rng.random_range(-amount..=amount);
    let mut out = [0u8; 3];
    for (o, b) in out.iter_mut().zip(rgb) {
        *o = (b as i32 + d).clamp(0, 255) as u8;
    }
    out
}

fn lerp_rgb(a: [u8; 3], b: [u8; 3], t: f64) -> [u8; 3] {
    let mut out = [0u8; 3];
    for c in 0..3 {
        out[c] = (a[c] as f64 + (b[c] as f64 - a[c] as f64) * t).round() as u8;
    }
    out
}

#[derive(Clone, Copy)]
enum Shape {
    Rect,
    Ellipse,
}

struct ObjectSpec {
    shape: Shape,
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    color: [u8; 3],
    checker: Option<[u8; 3]>,
}

impl ObjectSpec {
    fn covers(&self, x: u32, y: u32) -> bool {
        let dx = x as f64 + 0.5 - self.cx;
        let dy = y as f64 + 0.5 - self.cy;
        match self.shape {
            Shape::Rect => dx.abs() <= self.rx && dy.abs() <= self.ry,
            Shape::Ellipse => {
                (dx / self.rx) * (dx / self.rx) + (dy / self.ry) * (dy / self.ry) <= 1.0
            }
        }
    }

    fn color_at(&self, x: u32, y: u32) -> [u8; 3] {
        match self.checker {
            Some(alt) if (x / 4 + y / 4) % 2 == 1 => alt,
            _ => self.color,
        }
    }
}

/// Draws sample `index` of the configured corpus. Identical output for
/// identical `(seed, stream_offset + index, config geometry)`.
pub fn generate_sample(cfg: &SynthConfig, index: usize) -> Result<SynthSample, LabelingError> {
    let size = cfg.image_size;
    let grid = PatchGrid::square(size, cfg.patch_size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(cfg.stream_offset + index as u64);

    // Background: gradient between two cool colors, vertical or horizontal.
    let top = pick_jittered(&mut rng, &COOL_PALETTE, 15);
    let bottom = pick_jittered(&mut rng, &COOL_PALETTE, 15);
    let vertical = rng.random_bool(0.5);
    let mut pixels = Vec::with_capacity(size as usize * size as usize * 3);
    for y in 0..size {
        for x in 0..size {
            let t = if vertical {
                y as f64 / (size - 1) as f64
            } else {
                x as f64 / (size - 1) as f64
            };
            let rgb = add_noise(&mut rng, lerp_rgb(top, bottom, t), 12);
            pixels.extend_from_slice(&rgb);
        }
    }
    let mut image = RgbImage::new(size, size, pixels).expect("sized to match");

    // Objects: each fully inside the frame so its box is exact.
    let n_objects = rng.random_range(cfg.min_objects..=cfg.max_objects.max(cfg.min_objects));
    let mut specs = Vec::with_capacity(n_objects);
    for _ in 0..n_objects {
        let r_lo = size as f64 / 10.0;
        let r_hi = size as f64 / 5.0;
        let rx = rng.random_range(r_lo..r_hi);
        let ry = rng.random_range(r_lo..r_hi);
        let cx = rng.random_range(rx..(size as f64 - rx));
        let cy = rng.random_range(ry..(size as f64 - ry));
        let shape = if rng.random_bool(0.5) {
            Shape::Rect
        } else {
            Shape::Ellipse
        };
        let color = pick_jittered(&mut rng, &WARM_PALETTE, 15);
        let checker = if rng.random_bool(0.5) {
            Some(pick_jittered(&mut rng, &WARM_PALETTE, 15))
        } else {
            None
        };
        specs.push(ObjectSpec {
            shape,
            cx,
            cy,
            rx,
            ry,
            color,
            checker,
        });
    }

    let mut mask_values = vec![0u8; size as usize * size as usize];
    let mut boxes = Vec::with_capacity(specs.len());
    for (obj_idx, spec) in specs.iter().enumerate() {
        let class_id = (obj_idx + 1) as u8;
        // Track painted extents so each box circumscribes exactly the pixels
        // the object actually covers.
        let mut extent: Option<(u32, u32, u32, u32)> = None;
        let x_lo = (spec.cx - spec.rx).floor().max(0.0) as u32;
        let x_hi = ((spec.cx + spec.rx).ceil() as u32).min(size - 1);
        let y_lo = (spec.cy - spec.ry).floor().max(0.0) as u32;
        let y_hi = ((spec.cy + spec.ry).ceil() as u32).min(size - 1);
        for y in y_lo..=y_hi {
            for x in x_lo..=x_hi {
                if !spec.covers(x, y) {
                    continue;
                }
                let rgb = add_noise(&mut rng, spec.color_at(x, y), 8);
                image.set_pixel(x, y, rgb);
                mask_values[y as usize * size as usize + x as usize] = class_id;
                extent = Some(match extent {
                    None => (x, y, x, y),
                    Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                });
            }
        }
        if let Some((x0, y0, x1, y1)) = extent {
            boxes.push(BoundingBox {
                x_min: x0,
                y_min: y0,
                x_max: x1 + 1,
                y_max: y1 + 1,
            });
        }
    }

    let mask = SegMask::new(size, size, mask_values).expect("sized to match");
    let labels = label_from_mask(&grid, &mask, cfg.mask_fraction)?;
    Ok(SynthSample {
        image,
        mask,
        boxes,
        labels,
    })
}

/// Generates `cfg.count` samples.
pub fn generate(cfg: &SynthConfig) -> Result<Vec<SynthSample>, LabelingError> {
    (0..cfg.count).map(|i| generate_sample(cfg, i)).collect()
}
