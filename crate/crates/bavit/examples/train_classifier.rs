//! Trains the token classifier end to end on a synthetic corpus, then
//! checkpoints it, reloads it, and resumes for two more epochs — the resumed
//! run matches an uninterrupted one bit for bit because batch shuffling is
//! derived from the epoch index, not from live RNG state.
//!
//! Run with: `cargo run --release --example train_classifier`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use bavit::data::synth::{generate, SynthConfig};
use bavit::data::Sample;
use bavit::net::{BavitModel, ModelConfig};
use bavit::train::checkpoint::{load_checkpoint, save_checkpoint};
use bavit::train::{AdamConfig, LrSchedule, TrainConfig, Trainer};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let synth = SynthConfig {
        image_size: 64,
        patch_size: 16,
        count: 48,
        seed: 5,
        ..SynthConfig::default()
    };
    let samples: Vec<Sample> = generate(&synth)?
        .into_iter()
        .map(|s| Sample {
            image: s.image,
            labels: s.labels,
        })
        .collect();
    let (train, val) = samples.split_at(40);

    let grid = train[0].labels.grid;
    let model_cfg = ModelConfig::new(grid, 32, 2, 4, 4)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let model = BavitModel::<f32>::init(model_cfg, &mut rng);
    let cfg = TrainConfig {
        epochs: 12,
        batch_size: 8,
        adam: AdamConfig::default(),
        schedule: LrSchedule {
            base_lr: 1e-3,
            step_size: 8,
            gamma: 0.1,
        },
        clip_norm: Some(1.0),
        seed: 0,
        early_stop_acc: None,
    };

    let mut trainer = Trainer::new(model, cfg);
    let report = trainer.fit(train, val)?;
    println!("epoch      lr   train    val    acc");
    for e in &report.history {
        println!(
            "{:>5}  {:>6.0e}  {:.4} {:.4}  {:.3}",
            e.epoch, e.lr, e.train_loss, e.val_loss, e.val_accuracy
        );
    }
    println!(
        "\nbest val accuracy {:.3} after {} epochs ({:.1}s)",
        report.best_val_accuracy, report.epochs_run, report.wall_time_s
    );

    // Checkpoint, reload, resume: the reloaded trainer carries the exact
    // weights, Adam moments, and epoch counter.
    let path = std::env::temp_dir().join("bavit_example.ckpt");
    save_checkpoint(
        &path,
        &trainer.model,
        &trainer.adam,
        &trainer.cfg.schedule,
        trainer.next_epoch,
    )?;
    let loaded = load_checkpoint(&path)?;
    assert_eq!(loaded.model.params, trainer.model.params);
    println!("checkpoint round-trip at {} is bit-exact", path.display());

    let mut resumed = Trainer::resume(
        loaded.model,
        loaded.adam,
        TrainConfig {
            epochs: 14,
            ..trainer.cfg
        },
        loaded.epoch,
    );
    let more = resumed.fit(train, val)?;
    println!(
        "resumed from epoch {} and ran {} more; final val accuracy {:.3}",
        loaded.epoch,
        more.history.len(),
        more.final_val_accuracy
    );
    Ok(())
}
