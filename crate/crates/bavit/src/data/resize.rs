//! Resampling of images, masks, and box annotations onto the model's input
//! resolution.
//!
//! Photographs get bilinear filtering; masks must keep exact class ids and
//! use nearest-neighbor with the same floor-based source index the label
//! upscaler uses, so a mask resized here and a label map upscaled later stay
//! aligned. Boxes are rescaled analytically from full-resolution coordinates
//! rather than being re-derived from resampled pixels.

use crate::labeling::{BoundingBox, SegMask};
use crate::ppm::RgbImage;

/// Bilinear resize with half-pixel centers: destination pixel centers map to
/// `(d + 0.5) * src/dst - 0.5` in source space, clamped at the borders.
pub fn resize_bilinear(src: &RgbImage, dst_width: u32, dst_height: u32) -> RgbImage {
    assert!(dst_width > 0 && dst_height > 0, "empty resize target");
    if dst_width == src.width && dst_height == src.height {
        return src.clone();
    }
    let sw = src.width as usize;
    let scale_x = src.width as f64 / dst_width as f64;
    let scale_y = src.height as f64 / dst_height as f64;
    let src_data = src.data();
    let mut out = Vec::with_capacity(dst_width as usize * dst_height as usize * 3);
    for dy in 0..dst_height {
        let fy = ((dy as f64 + 0.5) * scale_y - 0.5).max(0.0);
        let y0 = (fy.floor() as u32).min(src.height - 1);
        let y1 = (y0 + 1).min(src.height - 1);
        let wy = fy - y0 as f64;
        for dx in 0..dst_width {
            let fx = ((dx as f64 + 0.5) * scale_x - 0.5).max(0.0);
            let x0 = (fx.floor() as u32).min(src.width - 1);
            let x1 = (x0 + 1).min(src.width - 1);
            let wx = fx - x0 as f64;
            let base00 = (y0 as usize * sw + x0 as usize) * 3;
            let base01 = (y0 as usize * sw + x1 as usize) * 3;
            let base10 = (y1 as usize * sw + x0 as usize) * 3;
            let base11 = (y1 as usize * sw + x1 as usize) * 3;
            for c in 0..3 {
                let top = src_data[base00 + c] as f64 * (1.0 - wx) + src_data[base01 + c] as f64 * wx;
                let bot = src_data[base10 + c] as f64 * (1.0 - wx) + src_data[base11 + c] as f64 * wx;
                let v = top * (1.0 - wy) + bot * wy;
                out.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    RgbImage::new(dst_width, dst_height, out).expect("sized to match")
}

/// Nearest-neighbor mask resize; source index is `floor(d * src / dst)`,
/// computed in integer arithmetic.
pub fn resize_mask_nearest(src: &SegMask, dst_width: u32, dst_height: u32) -> SegMask {
    assert!(dst_width > 0 && dst_height > 0, "empty resize target");
    let mut out = Vec::with_capacity(dst_width as usize * dst_height as usize);
    for dy in 0..dst_height {
        let sy = (dy as u64 * src.height as u64 / dst_height as u64) as u32;
        for dx in 0..dst_width {
            let sx = (dx as u64 * src.width as u64 / dst_width as u64) as u32;
            out.push(src.class_at(sx, sy));
        }
    }
    SegMask::new(dst_width, dst_height, out).expect("sized to match")
}

/// Rescales a box from `(src_w, src_h)` coordinates to `(dst_w, dst_h)`,
/// rounding each edge to the nearest pixel. A box that rounds to zero area
/// is widened back to one pixel on the collapsed axis so downstream labeling
/// never sees a degenerate rectangle.
pub fn scale_box(
    bbox: &BoundingBox,
    src_w: u32,
    src_h: u32,
    dst_w: u32,
    dst_h: u32,
) -> BoundingBox {
    let scale = |v: u32, dst: u32, src: u32| -> u32 {
        ((v as f64 * dst as f64 / src as f64).round() as u32).min(dst)
    };
    let mut x_min = scale(bbox.x_min, dst_w, src_w);
    let mut x_max = scale(bbox.x_max, dst_w, src_w);
    let mut y_min = scale(bbox.y_min, dst_h, src_h);
    let mut y_max = scale(bbox.y_max, dst_h, src_h);
    if x_max <= x_min {
        if x_min == dst_w {
            x_min = dst_w - 1;
        }
        x_max = x_min + 1;
    }
    if y_max <= y_min {
        if y_min == dst_h {
            y_min = dst_h - 1;
        }
        y_max = y_min + 1;
    }
    BoundingBox {
        x_min,
        y_min,
        x_max,
        y_max,
    }
}
