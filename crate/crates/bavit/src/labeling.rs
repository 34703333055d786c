//! Per-patch foreground/background labeling from detection and segmentation
//! ground truth.
//!
//! A patch is foreground under box supervision when its overlap with any
//! bounding box reaches the threshold `tau`; two overlap criteria are
//! provided. Under mask supervision a patch is foreground when strictly more
//! than `min_fraction` of its pixels carry a nonzero class id.
//!
//! All geometry is integer: rectangles are half-open pixel ranges and areas
//! are exact pixel counts, so every ratio here is a quotient of two integers.

use crate::grid::{GridError, PatchGrid, TokenLabelMap};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LabelingError {
    #[error("degenerate rectangle [{x_min},{x_max})x[{y_min},{y_max}) has zero area")]
    DegenerateRect {
        x_min: u32,
        y_min: u32,
        x_max: u32,
        y_max: u32,
    },
    #[error("overlap threshold {0} is outside [0, 1]")]
    ThresholdOutOfRange(f64),
    #[error("mask fraction {0} is outside (0, 1)")]
    FractionOutOfRange(f64),
    #[error("mask is {mask_width}x{mask_height} but grid expects {grid_width}x{grid_height}")]
    MaskDimensionMismatch {
        mask_width: u32,
        mask_height: u32,
        grid_width: u32,
        grid_height: u32,
    },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Half-open pixel rectangle `[x_min, x_max) x [y_min, y_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

impl BoundingBox {
    pub fn new(x_min: u32, y_min: u32, x_max: u32, y_max: u32) -> Result<Self, LabelingError> {
        let b = Self {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        if b.area() == 0 {
            return Err(LabelingError::DegenerateRect {
                x_min,
                y_min,
                x_max,
                y_max,
            });
        }
        Ok(b)
    }

    pub fn width(&self) -> u64 {
        self.x_max.saturating_sub(self.x_min) as u64
    }

    pub fn height(&self) -> u64 {
        self.y_max.saturating_sub(self.y_min) as u64
    }

    pub fn area(&self) -> u64 {
        self.width() * self.height()
    }

    /// Exact pixel count of the intersection with another rectangle.
    pub fn intersection_area(&self, other: &BoundingBox) -> u64 {
        let x0 = self.x_min.max(other.x_min);
        let x1 = self.x_max.min(other.x_max);
        let y0 = self.y_min.max(other.y_min);
        let y1 = self.y_max.min(other.y_max);
        if x1 <= x0 || y1 <= y0 {
            0
        } else {
            (x1 - x0) as u64 * (y1 - y0) as u64
        }
    }

    /// Clamps the rectangle to `[0, width) x [0, height)`. Returns `None`
    /// when nothing of it remains inside the image.
    pub fn clamp_to(&self, width: u32, height: u32) -> Option<BoundingBox> {
        let x_max = self.x_max.min(width);
        let y_max = self.y_max.min(height);
        if self.x_min >= x_max || self.y_min >= y_max {
            return None;
        }
        Some(BoundingBox {
            x_min: self.x_min,
            y_min: self.y_min,
            x_max,
            y_max,
        })
    }
}

/// Per-pixel class-id raster; 0 is background, any nonzero id is an object.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegMask {
    pub width: u32,
    pub height: u32,
    values: Vec<u8>,
}

impl SegMask {
    pub fn new(width: u32, height: u32, values: Vec<u8>) -> Result<Self, String> {
        if values.len() != (width as usize) * (height as usize) {
            return Err(format!(
                "mask data has {} pixels, expected {}",
                values.len(),
                (width as usize) * (height as usize)
            ));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn class_at(&self, x: u32, y: u32) -> u8 {
        self.values[y as usize * self.width as usize + x as usize]
    }
}

/// Which overlap ratio decides whether a box makes a patch foreground.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapMode {
    /// Intersection over union of patch and box.
    Jaccard,
    /// Intersection over patch area; the default, since with 16x16 patches
    /// and typical object boxes it is the only criterion a 0.5 threshold can
    /// meaningfully pass.
    #[default]
    PatchCoverage,
}

impl OverlapMode {
    pub fn overlap(&self, patch: &BoundingBox, bbox: &BoundingBox) -> Result<f64, LabelingError> {
        match self {
            OverlapMode::Jaccard => jaccard(patch, bbox),
            OverlapMode::PatchCoverage => patch_coverage(patch, bbox),
        }
    }
}

impl std::str::FromStr for OverlapMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jaccard" => Ok(OverlapMode::Jaccard),
            "coverage" | "patch_coverage" => Ok(OverlapMode::PatchCoverage),
            other => Err(format!(
                "unknown overlap mode {other:?} (expected jaccard or coverage)"
            )),
        }
    }
}

fn check_valid(rect: &BoundingBox) -> Result<(), LabelingError> {
    if rect.x_min >= rect.x_max || rect.y_min >= rect.y_max {
        return Err(LabelingError::DegenerateRect {
            x_min: rect.x_min,
            y_min: rect.y_min,
            x_max: rect.x_max,
            y_max: rect.y_max,
        });
    }
    Ok(())
}

/// Intersection area over union area of two rectangles; 0 when disjoint.
pub fn jaccard(patch: &BoundingBox, bbox: &BoundingBox) -> Result<f64, LabelingError> {
    check_valid(patch)?;
    check_valid(bbox)?;
    let inter = patch.intersection_area(bbox);
    let union = patch.area() + bbox.area() - inter;
    Ok(inter as f64 / union as f64)
}

/// Intersection area over patch area; 1 when the patch lies inside the box.
pub fn patch_coverage(patch: &BoundingBox, bbox: &BoundingBox) -> Result<f64, LabelingError> {
    check_valid(patch)?;
    check_valid(bbox)?;
    Ok(patch.intersection_area(bbox) as f64 / patch.area() as f64)
}

/// Labels every patch of `grid` foreground iff some box overlaps it by at
/// least `tau` under `mode`. Boxes are clamped to the image first; boxes that
/// fall entirely outside contribute nothing.
pub fn label_from_boxes(
    grid: &PatchGrid,
    boxes: &[BoundingBox],
    tau: f64,
    mode: OverlapMode,
) -> Result<TokenLabelMap, LabelingError> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(LabelingError::ThresholdOutOfRange(tau));
    }
    let clamped: Vec<BoundingBox> = boxes
        .iter()
        .filter_map(|b| b.clamp_to(grid.image_width, grid.image_height))
        .collect();
    let mut labels = vec![0u8; grid.tokens()];
    for row in 0..grid.rows {
        for col in 0..grid.cols {
            let (x0, y0, x1, y1) = grid.patch_rect(row, col);
            let patch = BoundingBox {
                x_min: x0,
                y_min: y0,
                x_max: x1,
                y_max: y1,
            };
            let mut fg = false;
            for bbox in &clamped {
                if mode.overlap(&patch, bbox)? >= tau {
                    fg = true;
                    break;
                }
            }
            if fg {
                labels[grid.index(row, col)] = 1;
            }
        }
    }
    Ok(TokenLabelMap::new(*grid, labels)?)
}

/// Labels a patch foreground iff strictly more than `min_fraction` of its
/// pixels carry a nonzero class id. Only zero versus nonzero matters; class
/// identities are ignored.
pub fn label_from_mask(
    grid: &PatchGrid,
    mask: &SegMask,
    min_fraction: f64,
) -> Result<TokenLabelMap, LabelingError> {
    if !(min_fraction > 0.0 && min_fraction < 1.0) {
        return Err(LabelingError::FractionOutOfRange(min_fraction));
    }
    if mask.width != grid.image_width || mask.height != grid.image_height {
        return Err(LabelingError::MaskDimensionMismatch {
            mask_width: mask.width,
            mask_height: mask.height,
            grid_width: grid.image_width,
            grid_height: grid.image_height,
        });
    }
    let k = grid.patch_size;
    let patch_area = (k as u64 * k as u64) as f64;
    let mut labels = vec![0u8; grid.tokens()];
    for row in 0..grid.rows {
        for col in 0..grid.cols {
            let (x0, y0, x1, y1) = grid.patch_rect(row, col);
            let mut nonzero: u64 = 0;
            for y in y0..y1 {
                let base = y as usize * mask.width as usize;
                for x in x0..x1 {
                    if mask.values[base + x as usize] != 0 {
                        nonzero += 1;
                    }
                }
            }
            if nonzero as f64 / patch_area > min_fraction {
                labels[grid.index(row, col)] = 1;
            }
        }
    }
    Ok(TokenLabelMap::new(*grid, labels)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(x0: u32, y0: u32, x1: u32, y1: u32) -> BoundingBox {
        BoundingBox::new(x0, y0, x1, y1).unwrap()
    }

    /// Pixel-counting oracle: iterate every pixel of the enclosing region and
    /// tally membership in patch, box, and both.
    pub(super) fn pixel_count_overlaps(patch: &BoundingBox, bbox: &BoundingBox) -> (u64, u64, u64) {
        let x_lo = patch.x_min.min(bbox.x_min);
        let x_hi = patch.x_max.max(bbox.x_max);
        let y_lo = patch.y_min.min(bbox.y_min);
        let y_hi = patch.y_max.max(bbox.y_max);
        let mut inter = 0u64;
        let mut union = 0u64;
        let mut patch_area = 0u64;
        for y in y_lo..y_hi {
            for x in x_lo..x_hi {
                let in_patch =
                    x >= patch.x_min && x < patch.x_max && y >= patch.y_min && y < patch.y_max;
                let in_box = x >= bbox.x_min && x < bbox.x_max && y >= bbox.y_min && y < bbox.y_max;
                if in_patch {
                    patch_area += 1;
                }
                if in_patch && in_box {
                    inter += 1;
                }
                if in_patch || in_box {
                    union += 1;
                }
            }
        }
        (inter, union, patch_area)
    }

    #[test]
    fn jaccard_identical_rects_is_one() {
        let p = rect(0, 0, 16, 16);
        assert_eq!(jaccard(&p, &p).unwrap(), 1.0);
    }

    #[test]
    fn jaccard_disjoint_is_zero() {
        let p = rect(0, 0, 16, 16);
        let b = rect(100, 0, 116, 16);
        assert_eq!(jaccard(&p, &b).unwrap(), 0.0);
    }

    #[test]
    fn jaccard_quarter_overlap() {
        // Patch 16x16 inside a 32x32 box: intersection 256, union 1024.
        let p = rect(0, 0, 16, 16);
        let b = rect(0, 0, 32, 32);
        let (inter, union, _) = pixel_count_overlaps(&p, &b);
        assert_eq!((inter, union), (256, 1024));
        assert_eq!(jaccard(&p, &b).unwrap(), inter as f64 / union as f64);
        assert_eq!(jaccard(&p, &b).unwrap(), 0.25);
    }

    #[test]
    fn coverage_full_and_half() {
        let p = rect(0, 0, 16, 16);
        assert_eq!(patch_coverage(&p, &rect(0, 0, 32, 32)).unwrap(), 1.0);
        let half = rect(8, 0, 24, 16);
        let (inter, _, area) = pixel_count_overlaps(&p, &half);
        assert_eq!((inter, area), (128, 256));
        assert_eq!(patch_coverage(&p, &half).unwrap(), 0.5);
        assert_eq!(patch_coverage(&p, &rect(100, 0, 116, 16)).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_rectangle_is_an_error() {
        let p = rect(0, 0, 16, 16);
        let degenerate = BoundingBox {
            x_min: 4,
            y_min: 4,
            x_max: 4,
            y_max: 8,
        };
        assert!(matches!(
            jaccard(&p, &degenerate),
            Err(LabelingError::DegenerateRect { .. })
        ));
        assert!(matches!(
            patch_coverage(&degenerate, &p),
            Err(LabelingError::DegenerateRect { .. })
        ));
    }

    #[test]
    fn empty_box_list_labels_nothing() {
        let grid = PatchGrid::square(64, 16).unwrap();
        let map = label_from_boxes(&grid, &[], 0.5, OverlapMode::PatchCoverage).unwrap();
        assert_eq!(map.fg_count(), 0);
    }

    #[test]
    fn full_frame_box_labels_everything() {
        let grid = PatchGrid::square(64, 16).unwrap();
        let full = rect(0, 0, 64, 64);
        for mode in [OverlapMode::Jaccard, OverlapMode::PatchCoverage] {
            let map = label_from_boxes(&grid, &[full], 1.0, mode).unwrap();
            // Coverage of every patch is 1; jaccard of a patch vs the full
            // frame is small, so only coverage reaches tau=1.
            if mode == OverlapMode::PatchCoverage {
                assert_eq!(map.fg_count(), grid.tokens());
            }
        }
        let map = label_from_boxes(&grid, &[full], 0.05, OverlapMode::Jaccard).unwrap();
        // 256/4096 = 0.0625 >= 0.05, so jaccard labels everything too.
        assert_eq!(map.fg_count(), grid.tokens());
    }

    #[test]
    fn corner_box_labels_two_by_two_block() {
        let grid = PatchGrid::square(384, 16).unwrap();
        let map = label_from_boxes(
            &grid,
            &[rect(0, 0, 32, 32)],
            0.5,
            OverlapMode::PatchCoverage,
        )
        .unwrap();
        let mut expected_fg = Vec::new();
        for row in 0..2 {
            for col in 0..2 {
                expected_fg.push(grid.index(row, col));
            }
        }
        for i in 0..grid.tokens() {
            let want = if expected_fg.contains(&i) { 1 } else { 0 };
            assert_eq!(map.labels()[i], want, "token {i}");
        }
    }

    #[test]
    fn out_of_bounds_boxes_are_clamped() {
        let grid = PatchGrid::square(64, 16).unwrap();
        let overhang = BoundingBox {
            x_min: 48,
            y_min: 0,
            x_max: 200,
            y_max: 16,
        };
        let map = label_from_boxes(&grid, &[overhang], 0.5, OverlapMode::PatchCoverage).unwrap();
        assert_eq!(map.get(0, 3), 1);
        assert_eq!(map.fg_count(), 1);
    }

    #[test]
    fn mask_fraction_threshold_is_strict() {
        let grid = PatchGrid::square(16, 16).unwrap();
        // 26 of 256 pixels nonzero: 10.16% > 10% -> foreground.
        let mut values = vec![0u8; 256];
        for v in values.iter_mut().take(26) {
            *v = 7;
        }
        let mask = SegMask::new(16, 16, values.clone()).unwrap();
        assert_eq!(label_from_mask(&grid, &mask, 0.10).unwrap().fg_count(), 1);
        // 25 of 256 pixels: 9.77% is not strictly greater than 10%.
        values[25] = 0;
        let mask = SegMask::new(16, 16, values).unwrap();
        assert_eq!(label_from_mask(&grid, &mask, 0.10).unwrap().fg_count(), 0);
    }

    #[test]
    fn all_zero_mask_is_all_background() {
        let grid = PatchGrid::square(64, 16).unwrap();
        let mask = SegMask::new(64, 64, vec![0; 64 * 64]).unwrap();
        assert_eq!(label_from_mask(&grid, &mask, 0.10).unwrap().fg_count(), 0);
    }

    #[test]
    fn mask_labels_ignore_class_identity() {
        let grid = PatchGrid::square(32, 16).unwrap();
        let mut a = vec![0u8; 32 * 32];
        let mut b = vec![0u8; 32 * 32];
        for i in 0..200 {
            a[i] = 3;
            b[i] = if i % 2 == 0 { 7 } else { 1 };
        }
        let ma = label_from_mask(&grid, &SegMask::new(32, 32, a).unwrap(), 0.10).unwrap();
        let mb = label_from_mask(&grid, &SegMask::new(32, 32, b).unwrap(), 0.10).unwrap();
        assert_eq!(ma, mb);
    }

    #[test]
    fn mask_dimension_mismatch_is_an_error() {
        let grid = PatchGrid::square(64, 16).unwrap();
        let mask = SegMask::new(32, 32, vec![0; 32 * 32]).unwrap();
        assert!(matches!(
            label_from_mask(&grid, &mask, 0.10),
            Err(LabelingError::MaskDimensionMismatch { .. })
        ));
    }
}
