//! The cost side of pruning: how many tokens a 12-layer, 1024-token
//! detector processes once a 2-layer, 576-token classifier prunes its input
//! — and where the break-even point sits, below which the classifier costs
//! more than it saves.
//!
//! Run with: `cargo run --release --example token_economics`

use bavit::prune::{render_table, economics_table, token_reduction, PruneReport, TokenBudget};

fn main() {
    let budget = TokenBudget::default();
    println!(
        "detector: {} tokens x {} layers = {}",
        budget.detector_tokens,
        budget.detector_layers,
        budget.total_detector()
    );
    println!(
        "classifier overhead: {} tokens x {} layers = {}\n",
        budget.bavit_tokens,
        budget.bavit_layers,
        budget.total_bavit()
    );

    let sparsities = [
        0.46, 0.43, 0.40, 0.39, 0.37, 0.35, 0.32, 0.29, 0.05, 0.02, 0.00,
    ];
    let rows = economics_table(&budget, &sparsities);
    print!("{}", render_table(&rows));

    // Break-even: savings cover the classifier exactly when the pruned
    // fraction of detector tokens equals the classifier's own total.
    let break_even = budget.total_bavit() as f64 / budget.total_detector() as f64;
    println!(
        "\nbreak-even sparsity: {:.3}% — at 0% pruning the add-on costs {:.2}%",
        break_even * 100.0,
        -PruneReport::at(&budget, 0.0).reduction * 100.0
    );

    // Per-image accounting over a mixed workload: each image prunes a
    // different fraction, the mean saving is what the deployment feels.
    let per_image: Vec<(u64, u64, f64)> = [0.46, 0.35, 0.29, 0.10]
        .iter()
        .map(|&s| (budget.total_detector(), budget.total_bavit(), s))
        .collect();
    println!(
        "mean reduction over a 4-image workload: {:.2}%",
        token_reduction(&per_image) * 100.0
    );
}
