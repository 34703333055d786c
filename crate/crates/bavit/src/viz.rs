//! Deterministic renderings of classifier output: tinted patch overlays
//! showing the foreground/background split, and sparse images where pruned
//! patches are blanked out.

use crate::grid::TokenLabelMap;
use crate::ppm::RgbImage;
use crate::prune::PruneMask;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum VizError {
    #[error("image is {image_w}x{image_h} but the grid covers {grid_w}x{grid_h}")]
    DimensionMismatch {
        image_w: u32,
        image_h: u32,
        grid_w: u32,
        grid_h: u32,
    },
    #[error("alpha must be in [0, 1], got {0}")]
    BadAlpha(f64),
}

/// Colors and blending for the renderers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderSpec {
    /// Tint for foreground patches in overlays.
    pub fg_tint: [u8; 3],
    /// Tint for background patches in overlays.
    pub bg_tint: [u8; 3],
    /// Overlay blend weight: 0 leaves the image untouched, 1 paints solid
    /// tint.
    pub alpha: f64,
    /// Fill for pruned patches in sparse renderings.
    pub fill: [u8; 3],
    /// Draw 1-pixel patch boundaries in overlays.
    pub grid_lines: bool,
}

impl Default for RenderSpec {
    fn default() -> Self {
        Self {
            fg_tint: [220, 40, 40],
            bg_tint: [120, 120, 120],
            alpha: 0.4,
            fill: [255, 255, 255],
            grid_lines: false,
        }
    }
}

const GRID_LINE_COLOR: [u8; 3] = [32, 32, 32];

fn check_dims(image: &RgbImage, grid_w: u32, grid_h: u32) -> Result<(), VizError> {
    if image.width != grid_w || image.height != grid_h {
        return Err(VizError::DimensionMismatch {
            image_w: image.width,
            image_h: image.height,
            grid_w,
            grid_h,
        });
    }
    Ok(())
}

fn blend(pixel: [u8; 3], tint: [u8; 3], alpha: f64) -> [u8; 3] {
    let mut out = [0u8; 3];
    for ch in 0..3 {
        let v = (1.0 - alpha) * pixel[ch] as f64 + alpha * tint[ch] as f64;
        out[ch] = v.round().clamp(0.0, 255.0) as u8;
    }
    out
}

/// Tints every patch by its label: foreground patches toward
/// `spec.fg_tint`, background toward `spec.bg_tint`, blended at
/// `spec.alpha`. Optional grid lines trace patch boundaries.
pub fn render_overlay(
    image: &RgbImage,
    labels: &TokenLabelMap,
    spec: &RenderSpec,
) -> Result<RgbImage, VizError> {
    if !(0.0..=1.0).contains(&spec.alpha) {
        return Err(VizError::BadAlpha(spec.alpha));
    }
    let grid = labels.grid;
    check_dims(image, grid.image_width, grid.image_height)?;
    let k = grid.patch_size;
    let mut out = image.clone();
    for y in 0..grid.image_height {
        for x in 0..grid.image_width {
            if spec.grid_lines && (x % k == 0 || y % k == 0) {
                out.set_pixel(x, y, GRID_LINE_COLOR);
                continue;
            }
            let label = labels.get((y / k) as usize, (x / k) as usize);
            let tint = if label == 1 { spec.fg_tint } else { spec.bg_tint };
            out.set_pixel(x, y, blend(image.pixel(x, y), tint, spec.alpha));
        }
    }
    Ok(out)
}

/// Copies kept patches verbatim and floods pruned patches with
/// `spec.fill`.
pub fn render_sparse(
    image: &RgbImage,
    mask: &PruneMask,
    spec: &RenderSpec,
) -> Result<RgbImage, VizError> {
    let grid = mask.grid;
    check_dims(image, grid.image_width, grid.image_height)?;
    let mut out = image.clone();
    for (t, &kept) in mask.keep().iter().enumerate() {
        if kept {
            continue;
        }
        let r = t / grid.cols;
        let c = t % grid.cols;
        let (x0, y0, x1, y1) = grid.patch_rect(r, c);
        for y in y0..y1 {
            for x in x0..x1 {
                out.set_pixel(x, y, spec.fill);
            }
        }
    }
    Ok(out)
}

/// File stem for a sparse rendering, with the measured sparsity embedded
/// as a fixed-precision percentage (`scene_sparse_37.50pct`).
pub fn sparse_stem(stem: &str, sparsity: f64) -> String {
    format!("{stem}_sparse_{:.2}pct", sparsity * 100.0)
}
