//! Background-aware vision transformer (BAViT) token classification.
//!
//! A small, CLS-free vision transformer labels every image patch as
//! foreground or background; the resulting per-token decisions drive token
//! pruning for a downstream detector, cutting its transformer workload
//! roughly in half at matched accuracy. This crate implements the full
//! pipeline on the CPU with no deep-learning framework: ground-truth patch
//! labeling, the model with hand-written forward and backward passes,
//! accumulative cross-entropy training, threshold calibration and pruning
//! economics, connected-component label smoothing, and PPM visualization.
//!
//! Start with [`net::BavitModel`] for the model itself, [`train::Trainer`]
//! for the optimization loop, and the `examples/` directory for end-to-end
//! walkthroughs of each stage.

pub mod cli;
pub mod data;
pub mod grid;
pub mod labeling;
pub mod linalg;
pub mod loss;
pub mod net;
pub mod postproc;
pub mod ppm;
pub mod prune;
pub mod train;
pub mod viz;
