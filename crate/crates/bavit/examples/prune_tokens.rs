//! Token pruning mechanics in isolation: thresholding background
//! probabilities into a keep/prune mask, calibrating the threshold for a
//! target sparsity, and the apply/restore round trip that hands a shorter
//! token sequence to a downstream detector.
//!
//! Run with: `cargo run --release --example prune_tokens`

use bavit::grid::PatchGrid;
use bavit::prune::{
    apply_mask, mask_from_probs, restore_tokens, theta_for_sparsity, upscale_labels, PruneMask,
};
use bavit::grid::TokenLabelMap;

fn show(mask: &PruneMask) -> String {
    let mut out = String::new();
    for r in 0..mask.grid.rows {
        out.push_str("    ");
        for c in 0..mask.grid.cols {
            let kept = mask.keep()[mask.grid.index(r, c)];
            out.push(if kept { 'K' } else { '-' });
        }
        out.push('\n');
    }
    out
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // A 4x4 grid with hand-picked background probabilities: high on the
    // rim, low in the middle, and one exactly at the threshold.
    let grid = PatchGrid::square(64, 16)?;
    #[rustfmt::skip]
    let p_bg: [f64; 16] = [
        0.9, 0.8, 0.9, 0.7,
        0.8, 0.1, 0.2, 0.9,
        0.7, 0.2, 0.1, 0.8,
        0.6, 0.9, 0.6, 0.9,
    ];
    let probs: Vec<f64> = p_bg.iter().flat_map(|&b| [b, 1.0 - b]).collect();

    let theta = 0.6;
    let mask = mask_from_probs(&probs, grid, theta)?;
    println!(
        "theta {theta}: prune when P(bg) > theta, strictly — kept {} of {}",
        mask.kept_count(),
        grid.tokens()
    );
    print!("{}", show(&mask));
    println!(
        "the two patches at exactly P(bg) = {theta} stay kept: ties survive\n"
    );

    // Calibration: pick theta so a target fraction of tokens gets pruned.
    // With distinct probabilities the quantile lands on the target exactly.
    let ramp: Vec<f64> = (0..16).map(|i| 0.03 + 0.06 * i as f64).collect();
    for target in [0.25, 0.5, 0.75] {
        let theta = theta_for_sparsity(&ramp, target)?;
        let pruned = ramp.iter().filter(|&&p| p > theta).count();
        println!("target sparsity {target:.2} -> theta {theta:.2}, pruned {pruned}/16");
    }
    // Repeated values collapse onto the threshold and stay kept, so heavy
    // ties can undershoot the target — pruning errs toward keeping.
    let tied_theta = theta_for_sparsity(&p_bg, 0.25)?;
    let tied = mask_from_probs(&probs, grid, tied_theta)?;
    println!(
        "same target on the tie-heavy grid: theta {tied_theta:.2} prunes only {:.2}",
        tied.sparsity()
    );

    // The round trip a detector front end performs: drop pruned tokens,
    // process the short sequence, scatter results back (zeros where pruned).
    let dim = 3;
    let tokens: Vec<f64> = (0..grid.tokens() * dim).map(|i| i as f64).collect();
    let packed = apply_mask(&tokens, dim, &mask)?;
    println!(
        "\npacked {} tokens x {dim} dims into {} values",
        mask.kept_count(),
        packed.len()
    );
    let restored = restore_tokens(&packed, dim, &mask)?;
    assert_eq!(restored.len(), tokens.len());
    let preserved = mask
        .keep()
        .iter()
        .enumerate()
        .filter(|&(_, &k)| k)
        .all(|(t, _)| restored[t * dim..(t + 1) * dim] == tokens[t * dim..(t + 1) * dim]);
    println!("kept tokens restored in place: {preserved}");

    // A coarse classifier grid can drive a finer detector grid: labels
    // upscale by nearest-neighbor index mapping.
    let kept: Vec<u8> = mask.keep().iter().map(|&k| u8::from(k)).collect();
    let coarse = TokenLabelMap::new(grid, kept)?;
    let fine = upscale_labels(&coarse, PatchGrid::square(128, 16)?)?;
    println!(
        "upscaled 4x4 keep map to {}x{} ({} kept of {})",
        fine.grid.rows,
        fine.grid.cols,
        fine.fg_count(),
        fine.grid.tokens()
    );
    Ok(())
}
