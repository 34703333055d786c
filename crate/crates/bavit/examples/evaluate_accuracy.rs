//! Scores a trained classifier token by token: accuracy, per-class
//! precision/recall, and the confusion matrix, then shows how the
//! neighborhood-vote smoothing pass changes the numbers — it can only turn
//! background predictions into foreground, so foreground recall never drops.
//!
//! Run with: `cargo run --release --example evaluate_accuracy`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use bavit::data::synth::{generate, SynthConfig};
use bavit::data::Sample;
use bavit::net::{BavitModel, ModelConfig};
use bavit::postproc::CcaConfig;
use bavit::train::{
    evaluate, evaluate_with_postproc, AdamConfig, EvalReport, LrSchedule, TrainConfig, Trainer,
};

fn print_report(tag: &str, r: &EvalReport) {
    println!("{tag}");
    println!("  loss {:.4}  accuracy {:.3}", r.loss, r.accuracy);
    println!(
        "  fg precision {:.3}  fg recall {:.3}",
        r.fg_precision, r.fg_recall
    );
    println!(
        "  bg precision {:.3}  bg recall {:.3}",
        r.bg_precision, r.bg_recall
    );
    println!(
        "  confusion [truth][pred]: bg->bg {}  bg->fg {}  fg->bg {}  fg->fg {}",
        r.confusion[0][0], r.confusion[0][1], r.confusion[1][0], r.confusion[1][1]
    );
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let synth = SynthConfig {
        image_size: 64,
        patch_size: 16,
        count: 40,
        seed: 9,
        ..SynthConfig::default()
    };
    let samples: Vec<Sample> = generate(&synth)?
        .into_iter()
        .map(|s| Sample {
            image: s.image,
            labels: s.labels,
        })
        .collect();
    let (train, val) = samples.split_at(32);

    let grid = train[0].labels.grid;
    let cfg = ModelConfig::new(grid, 32, 2, 4, 4)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = BavitModel::<f32>::init(cfg, &mut rng);
    let mut trainer = Trainer::new(
        model,
        TrainConfig {
            epochs: 10,
            batch_size: 8,
            adam: AdamConfig::default(),
            schedule: LrSchedule::default(),
            clip_norm: Some(1.0),
            seed: 1,
            early_stop_acc: None,
        },
    );
    trainer.fit(train, val)?;

    let plain = evaluate(&trainer.model, val, 8)?;
    print_report("raw predictions:", &plain);

    let smoothed = evaluate_with_postproc(&trainer.model, val, 8, Some(&CcaConfig::default()))?;
    print_report("\nafter 3 smoothing steps:", &smoothed);
    assert!(smoothed.fg_recall >= plain.fg_recall);

    // Ties go to background by contract: a model emitting identical logits
    // for both classes predicts background everywhere.
    let zero = BavitModel::<f32>::zeros(trainer.model.cfg);
    let all_bg = evaluate(&zero, val, 8)?;
    println!(
        "\nzero model (all logits tie): {} foreground predictions, bg recall {:.1}",
        all_bg.confusion[0][1] + all_bg.confusion[1][1],
        all_bg.bg_recall
    );
    Ok(())
}
