//! Renders what the classifier sees: a tinted overlay of predicted
//! foreground/background patches, and the sparse image a detector would
//! receive with pruned patches flooded white. Files land in the system
//! temp directory as plain PPMs.
//!
//! Run with: `cargo run --release --example visualize_overlay`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use bavit::data::synth::{generate, SynthConfig};
use bavit::data::{patchify_into, Sample};
use bavit::grid::TokenLabelMap;
use bavit::net::{BavitModel, ModelConfig};
use bavit::ppm::save_ppm;
use bavit::prune::{mask_from_probs, PruneMask};
use bavit::train::{AdamConfig, LrSchedule, TrainConfig, Trainer};
use bavit::viz::{render_overlay, render_sparse, sparse_stem, RenderSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let synth = SynthConfig {
        image_size: 64,
        patch_size: 16,
        count: 24,
        seed: 3,
        ..SynthConfig::default()
    };
    let samples: Vec<Sample> = generate(&synth)?
        .into_iter()
        .map(|s| Sample {
            image: s.image,
            labels: s.labels,
        })
        .collect();
    let (train, val) = samples.split_at(20);

    let grid = train[0].labels.grid;
    let cfg = ModelConfig::new(grid, 32, 2, 4, 4)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut trainer = Trainer::new(
        BavitModel::<f32>::init(cfg, &mut rng),
        TrainConfig {
            epochs: 10,
            batch_size: 8,
            adam: AdamConfig::default(),
            schedule: LrSchedule::default(),
            clip_norm: Some(1.0),
            seed: 2,
            early_stop_acc: None,
        },
    );
    let report = trainer.fit(train, val)?;
    println!("trained to val accuracy {:.3}", report.final_val_accuracy);

    // Classify one held-out image and threshold its background
    // probabilities into a keep/prune decision per patch.
    let image = &val[0].image;
    let mut x: Vec<f32> = Vec::new();
    patchify_into(image, &grid, &mut x);
    let probs = trainer.model.predict_probs(&x, 1);
    let theta = 0.5;
    let mask = mask_from_probs(&probs, grid, theta)?;
    println!(
        "theta {theta}: kept {} of {} patches (sparsity {:.2})",
        mask.kept_count(),
        grid.tokens(),
        mask.sparsity()
    );

    let kept: Vec<u8> = mask.keep().iter().map(|&k| u8::from(k)).collect();
    let labels = TokenLabelMap::new(grid, kept)?;
    let mask = PruneMask::new(grid, labels.labels().iter().map(|&l| l == 1).collect())?;

    let dir = std::env::temp_dir().join("bavit_example_viz");
    std::fs::create_dir_all(&dir)?;

    // Overlay: foreground tinted red, background gray, optional grid lines.
    let spec = RenderSpec {
        grid_lines: true,
        ..RenderSpec::default()
    };
    let overlay = render_overlay(image, &labels, &spec)?;
    let overlay_path = dir.join("patches_overlay.ppm");
    save_ppm(&overlay_path, &overlay)?;
    println!("overlay  -> {}", overlay_path.display());

    // Sparse view: pruned patches flooded with the fill color; the file
    // name carries the measured sparsity.
    let sparse = render_sparse(image, &mask, &RenderSpec::default())?;
    let sparse_path = dir.join(format!("{}.ppm", sparse_stem("patches", mask.sparsity())));
    save_ppm(&sparse_path, &sparse)?;
    println!("sparse   -> {}", sparse_path.display());

    // Ground truth for comparison.
    let truth = render_overlay(image, &val[0].labels, &spec)?;
    let truth_path = dir.join("patches_truth.ppm");
    save_ppm(&truth_path, &truth)?;
    println!("truth    -> {}", truth_path.display());
    Ok(())
}
