//! Error correction on predicted label maps: each background cell counts
//! its foreground neighbors through a 3x3 kernel and flips when the
//! weighted sum clears the threshold. Foreground never flips back, so the
//! pass is monotone and reaches a fixed point.
//!
//! Run with: `cargo run --release --example smooth_labels`

use bavit::grid::{PatchGrid, TokenLabelMap};
use bavit::postproc::{cca, cca_step, CcaConfig};

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
    // A solid object with two isolated holes the classifier got wrong,
    // plus a lone false positive in the corner.
    let grid = PatchGrid::square(128, 16)?;
    let mut labels = TokenLabelMap::all_background(grid);
    for r in 1..6 {
        for c in 1..6 {
            labels.set(r, c, 1);
        }
    }
    labels.set(2, 3, 0); // interior hole
    labels.set(4, 2, 0); // interior hole
    labels.set(7, 7, 1); // isolated speck stays: foreground never flips
    println!("predicted labels (two interior holes, one speck):");
    print!("{}", show(&labels));

    let cfg = CcaConfig::default();
    let one = cca_step(&labels, &cfg);
    println!("after one step — the holes flip (eight neighbors beat the threshold),");
    println!("and straight edges creep outward too, since an edge-adjacent cell");
    println!("already sees three foreground neighbors:");
    print!("{}", show(&one));

    let three = cca(&labels, &cfg);
    println!("after the default three steps:");
    print!("{}", show(&three));

    // Growth is monotone and the grid is finite, so iteration converges;
    // count the steps to the fixed point.
    let mut current = labels.clone();
    let mut steps = 0;
    loop {
        let next = cca_step(&current, &cfg);
        if next == current {
            break;
        }
        current = next;
        steps += 1;
    }
    println!("fixed point after {steps} step(s); further passes change nothing");
    assert_eq!(cca_step(&current, &cfg), current);
    Ok(())
}
