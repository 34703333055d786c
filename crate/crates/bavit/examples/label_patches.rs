//! Turns detection ground truth into per-patch labels: each patch of a
//! fixed grid becomes foreground when a bounding box overlaps it enough, or
//! when a segmentation mask covers enough of its pixels.
//!
//! Run with: `cargo run --release --example label_patches`

use bavit::grid::{PatchGrid, TokenLabelMap};
use bavit::labeling::{label_from_boxes, label_from_mask, BoundingBox, OverlapMode, SegMask};

fn show(map: &TokenLabelMap) -> String {
    let mut out = String::new();
    for r in 0..map.grid.rows {
        out.push_str("    ");
        for c in 0..map.grid.cols {
            out.push(if map.get(r, c) == 1 { '#' } else { '.' });
        }
        out.push('\n');
    }
    out
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // An 8x8 patch grid over a 128x128 image, with two objects.
    let grid = PatchGrid::square(128, 16)?;
    let boxes = vec![
        BoundingBox::new(20, 20, 76, 60)?,
        BoundingBox::new(90, 80, 126, 122)?,
    ];

    println!("patch coverage >= 0.5 (a box must cover half the patch):");
    let coverage = label_from_boxes(&grid, &boxes, 0.5, OverlapMode::PatchCoverage)?;
    print!("{}", show(&coverage));

    println!("jaccard >= 0.1 (intersection over union, far stricter scale):");
    let jaccard = label_from_boxes(&grid, &boxes, 0.1, OverlapMode::Jaccard)?;
    print!("{}", show(&jaccard));

    // The threshold trades recall for precision: lower tau marks every
    // touched patch, higher tau keeps only well-covered ones.
    println!("foreground patches as tau sweeps (patch coverage):");
    for tau in [0.05, 0.25, 0.5, 0.75, 1.0] {
        let map = label_from_boxes(&grid, &boxes, tau, OverlapMode::PatchCoverage)?;
        println!("    tau {tau:>4}: {:>2} foreground", map.fg_count());
    }

    // Pixel masks skip the geometry: a patch is foreground when strictly
    // more than the given fraction of its pixels carry a nonzero class.
    let mut values = vec![0u8; 128 * 128];
    for y in 0..128u32 {
        for x in 0..128u32 {
            let (dx, dy) = (x as f64 - 64.0, y as f64 - 64.0);
            if (dx * dx + dy * dy).sqrt() < 30.0 {
                values[(y * 128 + x) as usize] = 1;
            }
        }
    }
    let mask = SegMask::new(128, 128, values)?;
    println!("disk mask, fraction > 0.1:");
    let from_mask = label_from_mask(&grid, &mask, 0.1)?;
    print!("{}", show(&from_mask));
    Ok(())
}
