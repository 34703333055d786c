//! Command-line front end: annotation, synthesis, training, evaluation,
//! pruning economics, and visualization as subcommands over the library.
//!
//! Exit codes are part of the contract: 0 success, 1 usage error, 2 data
//! error (unreadable or inconsistent inputs), 3 numeric failure (diverged
//! or non-finite training). Machine-readable JSON goes to stdout; progress
//! and diagnostics go to stderr, so equal-seed runs pipe byte-identical
//! reports.

mod settings;

use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::data::annotations::{import_coco, AnnotationError, Annotations};
use crate::data::resize::{resize_bilinear, resize_mask_nearest, scale_box};
use crate::data::synth::{generate, SynthConfig};
use crate::data::{load_corpus, patchify_into, save_corpus, DataError, Sample};
use crate::grid::{GridError, PatchGrid, TokenLabelMap};
use crate::labeling::{label_from_boxes, label_from_mask, LabelingError, OverlapMode, SegMask};
use crate::net::{BavitModel, ModelConfig, ModelError};
use crate::postproc::CcaConfig;
use crate::ppm::{load_pgm, load_ppm, save_ppm, PpmError};
use crate::prune::{mask_from_probs, render_table, economics_table, PruneError, PruneMask, TokenBudget};
use crate::train::checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
use crate::train::{
    evaluate, evaluate_with_postproc, AdamConfig, LrSchedule, TrainConfig, TrainError, Trainer,
};
use crate::viz::{render_overlay, render_sparse, sparse_stem, RenderSpec, VizError};

use settings::Settings;

const SETTINGS_HELP: &str = "\
SETTINGS
  Tunables resolve in a fixed precedence, weakest first: built-in default,
  config file, command-line flag, environment variable. The config file
  (--config, TOML) holds one section per subcommand with keys in snake_case:

      [train]
      epochs = 50

  Environment variables follow BAVIT_<SECTION>_<KEY>, e.g. BAVIT_TRAIN_EPOCHS.
  Input and output paths come only from flags.

EXIT CODES
  0 success, 1 usage error, 2 data error, 3 numeric failure";

/// Error carrying the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<PpmError> for CliError {
    fn from(e: PpmError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<AnnotationError> for CliError {
    fn from(e: AnnotationError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<GridError> for CliError {
    fn from(e: GridError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<VizError> for CliError {
    fn from(e: VizError) -> Self {
        match e {
            VizError::BadAlpha(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<PruneError> for CliError {
    fn from(e: PruneError) -> Self {
        match e {
            PruneError::BadTheta(_) | PruneError::BadSparsity(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<LabelingError> for CliError {
    fn from(e: LabelingError) -> Self {
        match e {
            LabelingError::ThresholdOutOfRange(_)
            | LabelingError::FractionOutOfRange(_)
            | LabelingError::Grid(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            TrainError::NonFiniteGrad { .. } => CliError::Numeric(e.to_string()),
            TrainError::EmptyDataset(_) | TrainError::Data(_) => CliError::Data(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "bavit",
    version,
    about = "Background-aware token classification and pruning for vision transformers",
    after_help = SETTINGS_HELP
)]
struct Cli {
    /// TOML config file with one [section] per subcommand [default: none]
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Label image patches foreground/background from boxes or masks
    Annotate(AnnotateArgs),
    /// Generate a deterministic synthetic corpus of images and labels
    Synth(SynthArgs),
    /// Train the token classifier and write a checkpoint plus a report
    Train(TrainArgs),
    /// Score a checkpoint on a corpus and print accuracy metrics
    Eval(EvalArgs),
    /// Token-economics table for a pruned detector front end
    PruneReport(PruneReportArgs),
    /// Render overlay and sparse images for one input
    Viz(VizArgs),
    /// Convert COCO instance annotations to the native format
    ImportCoco(ImportCocoArgs),
}

#[derive(Args)]
struct AnnotateArgs {
    /// Annotation JSON with per-image boxes (exactly one of --boxes/--masks)
    #[arg(
        long,
        value_name = "FILE",
        conflicts_with = "masks",
        required_unless_present = "masks"
    )]
    boxes: Option<PathBuf>,
    /// Directory of PGM masks named <image-stem>.pgm (exactly one of --boxes/--masks)
    #[arg(long, value_name = "DIR")]
    masks: Option<PathBuf>,
    /// Directory of PPM images to label
    #[arg(long, value_name = "DIR")]
    images: PathBuf,
    /// Square working resolution in pixels [default: 128]
    #[arg(long)]
    size: Option<u32>,
    /// Patch edge in pixels [default: 16]
    #[arg(long)]
    patch: Option<u32>,
    /// Overlap threshold (boxes) or strict pixel fraction (masks) [default: 0.5]
    #[arg(long)]
    tau: Option<f64>,
    /// Box overlap criterion: coverage or jaccard [default: coverage]
    #[arg(long)]
    mode: Option<String>,
    /// Output directory for label files and manifest.json
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Number of images to generate [default: 16]
    #[arg(long)]
    n: Option<usize>,
    /// Square image edge in pixels [default: 128]
    #[arg(long)]
    size: Option<u32>,
    /// Patch edge in pixels [default: 16]
    #[arg(long)]
    patch: Option<u32>,
    /// RNG seed [default: 7]
    #[arg(long)]
    seed: Option<u64>,
    /// Minimum objects per image [default: 1]
    #[arg(long)]
    min_objects: Option<usize>,
    /// Maximum objects per image [default: 3]
    #[arg(long)]
    max_objects: Option<usize>,
    /// Strict pixel fraction for a foreground patch [default: 0.1]
    #[arg(long)]
    mask_frac: Option<f64>,
    /// Output corpus directory
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Corpus directory (images/, labels/, annotations.json)
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    /// Separate validation corpus [default: hold out a tail of --data]
    #[arg(long, value_name = "DIR")]
    val_data: Option<PathBuf>,
    /// Held-out fraction of --data when --val-data is absent [default: 0.1]
    #[arg(long)]
    val_frac: Option<f64>,
    /// Encoder depth in layers [default: 2]
    #[arg(long)]
    depth: Option<usize>,
    /// Embedding dimension [default: 192]
    #[arg(long)]
    dim: Option<usize>,
    /// Attention heads; must divide --dim [default: 3]
    #[arg(long)]
    heads: Option<usize>,
    /// MLP expansion ratio [default: 4]
    #[arg(long)]
    mlp_ratio: Option<usize>,
    /// Training epochs [default: 100]
    #[arg(long)]
    epochs: Option<usize>,
    /// Base learning rate [default: 0.001]
    #[arg(long)]
    lr: Option<f64>,
    /// Epochs between learning-rate decays [default: 30]
    #[arg(long)]
    step_size: Option<usize>,
    /// Learning-rate decay factor [default: 0.1]
    #[arg(long)]
    gamma: Option<f64>,
    /// Batch size [default: 32]
    #[arg(long)]
    batch: Option<usize>,
    /// Seed for weight init and batch shuffling [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Global-norm gradient clip [default: 1.0]
    #[arg(long)]
    clip: Option<f64>,
    /// Disable gradient clipping entirely
    #[arg(long)]
    no_clip: bool,
    /// Stop once validation accuracy reaches this value [default: off]
    #[arg(long, value_name = "ACC")]
    early_stop: Option<f64>,
    /// Checkpoint output path
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Also write the JSON training report here [default: stdout only]
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint to score
    #[arg(long, value_name = "FILE")]
    ckpt: PathBuf,
    /// Corpus directory to score on
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    /// Smooth predictions with the neighborhood vote before scoring
    #[arg(long)]
    cca: bool,
    /// Smoothing iterations when --cca is set [default: 3]
    #[arg(long)]
    cca_steps: Option<u32>,
    /// Batch size [default: 32]
    #[arg(long)]
    batch: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Text,
    Json,
}

#[derive(Args)]
struct PruneReportArgs {
    /// Comma-separated pruned fractions
    /// [default: 0.46,0.43,0.40,0.39,0.37,0.35,0.32,0.29,0.05,0.02,0.00]
    #[arg(long, value_name = "LIST")]
    sparsities: Option<String>,
    /// Detector tokens per layer [default: 1024]
    #[arg(long)]
    detector_tokens: Option<u64>,
    /// Detector layers [default: 12]
    #[arg(long)]
    detector_layers: Option<u64>,
    /// Classifier tokens per layer [default: 576]
    #[arg(long)]
    bavit_tokens: Option<u64>,
    /// Classifier layers [default: 2]
    #[arg(long)]
    bavit_layers: Option<u64>,
    /// Output format
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    format: ReportFormat,
    /// Also write the rendered report here [default: stdout only]
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VizArgs {
    /// Checkpoint providing the classifier
    #[arg(long, value_name = "FILE")]
    ckpt: PathBuf,
    /// Input PPM image (resized to the model's resolution if needed)
    #[arg(long, value_name = "FILE")]
    image: PathBuf,
    /// Prune a patch when its background probability exceeds this [default: 0.5]
    #[arg(long)]
    theta: Option<f64>,
    /// Smooth kept-patch labels with the neighborhood vote
    #[arg(long)]
    cca: bool,
    /// Smoothing iterations when --cca is set [default: 3]
    #[arg(long)]
    cca_steps: Option<u32>,
    /// Overlay tint opacity [default: 0.4]
    #[arg(long)]
    alpha: Option<f64>,
    /// Draw patch grid lines on the overlay
    #[arg(long)]
    grid_lines: bool,
    /// Output directory for the rendered images
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct ImportCocoArgs {
    /// COCO instances JSON to convert
    #[arg(long, value_name = "FILE")]
    coco: PathBuf,
    /// Output annotation JSON path
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

/// Parses the process arguments, runs one subcommand, and returns the exit
/// code. `--help`/`--version` exit 0; parse failures exit 1.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Writes to stdout; a closed pipe (e.g. `bavit ... | head`) ends the
/// process quietly instead of panicking mid-report.
fn emit(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    if out.write_all(text.as_bytes()).is_err() || out.flush().is_err() {
        std::process::exit(0);
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let st = Settings::load(cli.config.as_deref())?;
    match &cli.cmd {
        Cmd::Annotate(a) => cmd_annotate(&st, a),
        Cmd::Synth(a) => cmd_synth(&st, a),
        Cmd::Train(a) => cmd_train(&st, a),
        Cmd::Eval(a) => cmd_eval(&st, a),
        Cmd::PruneReport(a) => cmd_prune_report(&st, a),
        Cmd::Viz(a) => cmd_viz(&st, a),
        Cmd::ImportCoco(a) => cmd_import_coco(a),
    }
}

#[derive(Serialize)]
struct ManifestEntry {
    file: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    labels: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fg_tokens: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct AnnotateManifest {
    image_size: u32,
    patch_size: u32,
    tau: f64,
    mode: OverlapMode,
    ok: usize,
    failed: usize,
    entries: Vec<ManifestEntry>,
}

fn cmd_annotate(st: &Settings, a: &AnnotateArgs) -> Result<(), CliError> {
    let size = st.resolve("annotate", "size", a.size, 128u32)?;
    let patch = st.resolve("annotate", "patch", a.patch, 16u32)?;
    let tau = st.resolve("annotate", "tau", a.tau, 0.5f64)?;
    let mode_flag = a
        .mode
        .as_deref()
        .map(|s| s.parse::<OverlapMode>().map_err(CliError::Usage))
        .transpose()?;
    let mode = st.resolve("annotate", "mode", mode_flag, OverlapMode::PatchCoverage)?;
    let grid = PatchGrid::square(size, patch)?;
    if a.boxes.is_some() && !(0.0..=1.0).contains(&tau) {
        return Err(CliError::Usage(format!("tau {tau} is outside [0, 1]")));
    }
    if a.masks.is_some() && !(tau > 0.0 && tau < 1.0) {
        return Err(CliError::Usage(format!(
            "tau {tau} must lie strictly inside (0, 1) for mask labeling"
        )));
    }
    let ann = match &a.boxes {
        Some(path) => {
            let ann = Annotations::load(path)?;
            ann.validate()?;
            Some(ann)
        }
        None => None,
    };
    if let Some(dir) = &a.masks {
        if !dir.is_dir() {
            return Err(CliError::Data(format!(
                "mask directory {} is not readable",
                dir.display()
            )));
        }
    }

    let mut files: Vec<PathBuf> = Vec::new();
    for entry in fs::read_dir(&a.images)
        .map_err(|e| CliError::Data(format!("images {}: {e}", a.images.display())))?
    {
        let path = entry.map_err(|e| CliError::Data(e.to_string()))?.path();
        if path.extension().is_some_and(|e| e == "ppm") {
            files.push(path);
        }
    }
    files.sort();
    fs::create_dir_all(&a.out)?;

    let mut entries = Vec::with_capacity(files.len());
    let mut ok = 0usize;
    let mut failed = 0usize;
    for path in &files {
        let file = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let stem = path
            .file_stem()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        match annotate_one(&grid, tau, mode, ann.as_ref(), a.masks.as_deref(), path, &a.out) {
            Ok((labels, fg_tokens)) => {
                ok += 1;
                entries.push(ManifestEntry {
                    file,
                    labels: Some(labels),
                    fg_tokens: Some(fg_tokens),
                    error: None,
                });
            }
            Err(error) => {
                failed += 1;
                entries.push(ManifestEntry {
                    file: if file.is_empty() { stem } else { file },
                    labels: None,
                    fg_tokens: None,
                    error: Some(error),
                });
            }
        }
    }
    let manifest = AnnotateManifest {
        image_size: size,
        patch_size: patch,
        tau,
        mode,
        ok,
        failed,
        entries,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(a.out.join("manifest.json"), format!("{json}\n"))?;
    emit(&format!("{json}\n"));
    Ok(())
}

/// Labels one image; any failure becomes a manifest entry, not a process
/// error, so a bad file cannot sink the rest of the run.
fn annotate_one(
    grid: &PatchGrid,
    tau: f64,
    mode: OverlapMode,
    ann: Option<&Annotations>,
    masks: Option<&Path>,
    image_path: &Path,
    out: &Path,
) -> Result<(String, usize), String> {
    let file = image_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let stem = image_path
        .file_stem()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let image = load_ppm(image_path).map_err(|e| e.to_string())?;
    let labels = match ann {
        Some(ann) => {
            let rec = ann
                .images
                .iter()
                .find(|r| r.file == file)
                .ok_or_else(|| format!("no annotation record for {file}"))?;
            if rec.width != image.width || rec.height != image.height {
                return Err(format!(
                    "annotation record says {}x{} but the image is {}x{}",
                    rec.width, rec.height, image.width, image.height
                ));
            }
            let boxes: Vec<_> = ann
                .boxes_for_image(rec.id)
                .iter()
                .map(|b| {
                    scale_box(
                        b,
                        rec.width,
                        rec.height,
                        grid.image_width,
                        grid.image_height,
                    )
                })
                .collect();
            label_from_boxes(grid, &boxes, tau, mode).map_err(|e| e.to_string())?
        }
        None => {
            let dir = masks.expect("one of boxes/masks is present");
            let mask_path = dir.join(format!("{stem}.pgm"));
            let gray = load_pgm(&mask_path)
                .map_err(|e| format!("mask {}: {e}", mask_path.display()))?;
            let (w, h) = (gray.width, gray.height);
            let mask = SegMask::new(w, h, gray.into_data())?;
            let mask = if (w, h) == (grid.image_width, grid.image_height) {
                mask
            } else {
                resize_mask_nearest(&mask, grid.image_width, grid.image_height)
            };
            label_from_mask(grid, &mask, tau).map_err(|e| e.to_string())?
        }
    };
    let labels_file = format!("{stem}.txt");
    fs::write(out.join(&labels_file), labels.to_text()).map_err(|e| e.to_string())?;
    Ok((labels_file, labels.fg_count()))
}

#[derive(Serialize)]
struct SynthSummary {
    out: String,
    images: usize,
    boxes: usize,
    image_size: u32,
    patch_size: u32,
    seed: u64,
}

fn cmd_synth(st: &Settings, a: &SynthArgs) -> Result<(), CliError> {
    let n = st.resolve("synth", "n", a.n, 16usize)?;
    let size = st.resolve("synth", "size", a.size, 128u32)?;
    let patch = st.resolve("synth", "patch", a.patch, 16u32)?;
    let seed = st.resolve("synth", "seed", a.seed, 7u64)?;
    let min_objects = st.resolve("synth", "min_objects", a.min_objects, 1usize)?;
    let max_objects = st.resolve("synth", "max_objects", a.max_objects, 3usize)?;
    let mask_fraction = st.resolve("synth", "mask_frac", a.mask_frac, 0.1f64)?;
    if min_objects > max_objects || max_objects == 0 {
        return Err(CliError::Usage(format!(
            "object count range {min_objects}..={max_objects} is empty"
        )));
    }
    let cfg = SynthConfig {
        image_size: size,
        patch_size: patch,
        count: n,
        min_objects,
        max_objects,
        seed,
        stream_offset: 0,
        mask_fraction,
    };
    let samples = generate(&cfg)?;
    let ann = save_corpus(&a.out, &samples)?;
    let summary = SynthSummary {
        out: a.out.display().to_string(),
        images: samples.len(),
        boxes: ann.boxes.len(),
        image_size: size,
        patch_size: patch,
        seed,
    };
    emit(&format!(
        "{}\n",
        serde_json::to_string_pretty(&summary).expect("summary serializes")
    ));
    Ok(())
}

/// Splits off the final `frac` of the corpus for validation. A corpus too
/// small to split validates on the training set itself.
fn split_tail(mut samples: Vec<Sample>, frac: f64) -> (Vec<Sample>, Vec<Sample>) {
    let n = samples.len();
    let n_val = ((n as f64 * frac).round() as usize).min(n.saturating_sub(1));
    if n_val == 0 {
        let val = samples.clone();
        return (samples, val);
    }
    let val = samples.split_off(n - n_val);
    (samples, val)
}

fn shared_grid(samples: &[Sample], what: &str) -> Result<PatchGrid, CliError> {
    let Some(first) = samples.first() else {
        return Err(CliError::Data(format!("{what} corpus is empty")));
    };
    let grid = first.labels.grid;
    if samples.iter().any(|s| s.labels.grid != grid) {
        return Err(CliError::Data(format!(
            "{what} corpus mixes image or patch sizes"
        )));
    }
    Ok(grid)
}

fn cmd_train(st: &Settings, a: &TrainArgs) -> Result<(), CliError> {
    let depth = st.resolve("train", "depth", a.depth, 2usize)?;
    let dim = st.resolve("train", "dim", a.dim, 192usize)?;
    let heads = st.resolve("train", "heads", a.heads, 3usize)?;
    let mlp_ratio = st.resolve("train", "mlp_ratio", a.mlp_ratio, 4usize)?;
    let epochs = st.resolve("train", "epochs", a.epochs, 100usize)?;
    let lr = st.resolve("train", "lr", a.lr, 1e-3f64)?;
    let step_size = st.resolve("train", "step_size", a.step_size, 30usize)?;
    let gamma = st.resolve("train", "gamma", a.gamma, 0.1f64)?;
    let batch = st.resolve("train", "batch", a.batch, 32usize)?;
    let seed = st.resolve("train", "seed", a.seed, 0u64)?;
    let clip = st.resolve("train", "clip", a.clip, 1.0f64)?;
    let val_frac = st.resolve("train", "val_frac", a.val_frac, 0.1f64)?;
    if !(0.0..1.0).contains(&val_frac) {
        return Err(CliError::Usage(format!(
            "val-frac {val_frac} is outside [0, 1)"
        )));
    }

    let samples = load_corpus(&a.data)?;
    let grid = shared_grid(&samples, "training")?;
    let (train_set, val_set) = match &a.val_data {
        Some(dir) => {
            let val = load_corpus(dir)?;
            let val_grid = shared_grid(&val, "validation")?;
            if val_grid != grid {
                return Err(CliError::Data(
                    "validation corpus disagrees with training corpus on image or patch size"
                        .into(),
                ));
            }
            (samples, val)
        }
        None => split_tail(samples, val_frac),
    };

    let model_cfg = ModelConfig::new(grid, dim, depth, heads, mlp_ratio)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = BavitModel::<f32>::init(model_cfg, &mut rng);
    let cfg = TrainConfig {
        epochs,
        batch_size: batch,
        adam: AdamConfig::default(),
        schedule: LrSchedule {
            base_lr: lr,
            step_size,
            gamma,
        },
        clip_norm: if a.no_clip { None } else { Some(clip) },
        seed,
        early_stop_acc: a.early_stop,
    };
    let mut trainer = Trainer::new(model, cfg);
    let report = trainer.fit(&train_set, &val_set)?;
    save_checkpoint(
        &a.out,
        &trainer.model,
        &trainer.adam,
        &trainer.cfg.schedule,
        trainer.next_epoch,
    )?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    if let Some(path) = &a.report {
        fs::write(path, format!("{json}\n"))?;
    }
    emit(&format!("{json}\n"));
    eprintln!(
        "trained {} epoch(s) in {:.1}s; checkpoint at {}",
        report.epochs_run,
        report.wall_time_s,
        a.out.display()
    );
    if report.diverged {
        return Err(CliError::Numeric(format!(
            "training diverged ({}); the checkpoint holds the last good state",
            report.divergence_cause.as_deref().unwrap_or("unknown cause")
        )));
    }
    Ok(())
}

fn cmd_eval(st: &Settings, a: &EvalArgs) -> Result<(), CliError> {
    let batch = st.resolve("eval", "batch", a.batch, 32usize)?;
    let cca_steps = st.resolve("eval", "cca_steps", a.cca_steps, 3u32)?;
    let ck = load_checkpoint(&a.ckpt)?;
    let samples = load_corpus(&a.data)?;
    let grid = shared_grid(&samples, "evaluation")?;
    if grid != ck.model.cfg.grid {
        return Err(CliError::Data(format!(
            "checkpoint expects {}x{} patches of {}, corpus has {}x{} patches of {}",
            ck.model.cfg.grid.image_width,
            ck.model.cfg.grid.image_height,
            ck.model.cfg.grid.patch_size,
            grid.image_width,
            grid.image_height,
            grid.patch_size
        )));
    }
    let report = if a.cca {
        let cfg = CcaConfig {
            steps: cca_steps,
            ..CcaConfig::default()
        };
        evaluate_with_postproc(&ck.model, &samples, batch, Some(&cfg))?
    } else {
        evaluate(&ck.model, &samples, batch)?
    };
    emit(&format!(
        "{}\n",
        serde_json::to_string_pretty(&report).expect("report serializes")
    ));
    Ok(())
}

const DEFAULT_SPARSITIES: &str = "0.46,0.43,0.40,0.39,0.37,0.35,0.32,0.29,0.05,0.02,0.00";

fn parse_sparsities(text: &str) -> Result<Vec<f64>, CliError> {
    let mut out = Vec::new();
    for tok in text.split(',') {
        let tok = tok.trim();
        if tok.is_empty() {
            continue;
        }
        let s: f64 = tok
            .parse()
            .map_err(|e| CliError::Usage(format!("sparsity {tok:?}: {e}")))?;
        if !(0.0..=1.0).contains(&s) {
            return Err(CliError::Usage(format!("sparsity {s} is outside [0, 1]")));
        }
        out.push(s);
    }
    if out.is_empty() {
        return Err(CliError::Usage("no sparsities given".into()));
    }
    Ok(out)
}

fn cmd_prune_report(st: &Settings, a: &PruneReportArgs) -> Result<(), CliError> {
    let list = st.resolve(
        "prune_report",
        "sparsities",
        a.sparsities.clone(),
        DEFAULT_SPARSITIES.to_string(),
    )?;
    let sparsities = parse_sparsities(&list)?;
    let budget = TokenBudget {
        detector_tokens: st.resolve("prune_report", "detector_tokens", a.detector_tokens, 1024)?,
        detector_layers: st.resolve("prune_report", "detector_layers", a.detector_layers, 12)?,
        bavit_tokens: st.resolve("prune_report", "bavit_tokens", a.bavit_tokens, 576)?,
        bavit_layers: st.resolve("prune_report", "bavit_layers", a.bavit_layers, 2)?,
    };
    let rows = economics_table(&budget, &sparsities);
    let rendered = match a.format {
        ReportFormat::Text => render_table(&rows),
        ReportFormat::Json => format!(
            "{}\n",
            serde_json::to_string_pretty(&rows).expect("rows serialize")
        ),
    };
    if let Some(path) = &a.out {
        fs::write(path, &rendered)?;
    }
    emit(&rendered);
    Ok(())
}

#[derive(Serialize)]
struct VizSummary {
    overlay: String,
    sparse: String,
    sparsity: f64,
    kept_tokens: usize,
    pruned_tokens: usize,
    fg_tokens: usize,
}

fn cmd_viz(st: &Settings, a: &VizArgs) -> Result<(), CliError> {
    let theta = st.resolve("viz", "theta", a.theta, 0.5f64)?;
    let alpha = st.resolve("viz", "alpha", a.alpha, 0.4f64)?;
    let cca_steps = st.resolve("viz", "cca_steps", a.cca_steps, 3u32)?;
    let ck = load_checkpoint(&a.ckpt)?;
    let grid = ck.model.cfg.grid;
    let image = load_ppm(&a.image)?;
    let image = if (image.width, image.height) == (grid.image_width, grid.image_height) {
        image
    } else {
        resize_bilinear(&image, grid.image_width, grid.image_height)
    };

    let mut x: Vec<f32> = Vec::with_capacity(grid.tokens() * 3 * (grid.patch_size as usize).pow(2));
    patchify_into(&image, &grid, &mut x);
    let probs = ck.model.predict_probs(&x, 1);
    let mask = mask_from_probs(&probs, grid, theta)?;
    let kept: Vec<u8> = mask.keep().iter().map(|&k| u8::from(k)).collect();
    let mut labels = TokenLabelMap::new(grid, kept).expect("mask length matches the grid");
    if a.cca {
        let cfg = CcaConfig {
            steps: cca_steps,
            ..CcaConfig::default()
        };
        labels = crate::postproc::cca(&labels, &cfg);
    }
    let mask = PruneMask::new(grid, labels.labels().iter().map(|&l| l == 1).collect())?;

    let spec = RenderSpec {
        alpha,
        grid_lines: a.grid_lines,
        ..RenderSpec::default()
    };
    let overlay = render_overlay(&image, &labels, &spec)?;
    let sparse = render_sparse(&image, &mask, &spec)?;

    let stem = a
        .image
        .file_stem()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into());
    fs::create_dir_all(&a.out)?;
    let overlay_path = a.out.join(format!("{stem}_overlay.ppm"));
    let sparse_path = a
        .out
        .join(format!("{}.ppm", sparse_stem(&stem, mask.sparsity())));
    save_ppm(&overlay_path, &overlay)?;
    save_ppm(&sparse_path, &sparse)?;

    let summary = VizSummary {
        overlay: overlay_path.display().to_string(),
        sparse: sparse_path.display().to_string(),
        sparsity: mask.sparsity(),
        kept_tokens: mask.kept_count(),
        pruned_tokens: mask.pruned_count(),
        fg_tokens: labels.fg_count(),
    };
    emit(&format!(
        "{}\n",
        serde_json::to_string_pretty(&summary).expect("summary serializes")
    ));
    Ok(())
}

fn cmd_import_coco(a: &ImportCocoArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&a.coco)
        .map_err(|e| CliError::Data(format!("{}: {e}", a.coco.display())))?;
    let (ann, stats) = import_coco(&text)?;
    ann.save(&a.out)?;
    emit(&format!(
        "{}\n",
        serde_json::to_string_pretty(&stats).expect("stats serialize")
    ));
    Ok(())
}
