//! Token pruning: thresholding background probabilities into keep/prune
//! masks, calibrating the threshold for a target sparsity, transferring
//! label grids between token resolutions, gather/scatter around a pruned
//! compute stage, and the token-economics bookkeeping for running the
//! classifier as a detector front end.

use crate::grid::{PatchGrid, TokenLabelMap};
use crate::linalg::Real;
use crate::loss::NUM_CLASSES;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PruneError {
    #[error("theta must be in [0, 1], got {0}")]
    BadTheta(f64),
    #[error("target sparsity must be in [0, 1), got {0}")]
    BadSparsity(f64),
    #[error("calibration set is empty")]
    EmptyCalibration,
    #[error("expected {expected} values for the grid, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("destination grid {dst_rows}x{dst_cols} is smaller than source {src_rows}x{src_cols}")]
    DownscaleUnsupported {
        src_rows: usize,
        src_cols: usize,
        dst_rows: usize,
        dst_cols: usize,
    },
}

/// Per-token keep/prune decisions over one grid. `true` keeps the token.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneMask {
    pub grid: PatchGrid,
    keep: Vec<bool>,
}

impl PruneMask {
    pub fn new(grid: PatchGrid, keep: Vec<bool>) -> Result<Self, PruneError> {
        if keep.len() != grid.tokens() {
            return Err(PruneError::LengthMismatch {
                expected: grid.tokens(),
                found: keep.len(),
            });
        }
        Ok(Self { grid, keep })
    }

    pub fn keep(&self) -> &[bool] {
        &self.keep
    }

    pub fn kept_count(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    pub fn pruned_count(&self) -> usize {
        self.keep.len() - self.kept_count()
    }

    /// Fraction of tokens pruned.
    pub fn sparsity(&self) -> f64 {
        self.pruned_count() as f64 / self.keep.len() as f64
    }
}

/// Thresholds one image's token probabilities: a token is pruned exactly
/// when its background probability strictly exceeds `theta`. Ties survive —
/// losing foreground is the costly mistake, so the rule leans that way.
pub fn mask_from_probs<F: Real>(
    probs: &[F],
    grid: PatchGrid,
    theta: f64,
) -> Result<PruneMask, PruneError> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(PruneError::BadTheta(theta));
    }
    if probs.len() != grid.tokens() * NUM_CLASSES {
        return Err(PruneError::LengthMismatch {
            expected: grid.tokens() * NUM_CLASSES,
            found: probs.len(),
        });
    }
    let keep = (0..grid.tokens())
        .map(|t| probs[t * NUM_CLASSES].as_f64() <= theta)
        .collect();
    PruneMask::new(grid, keep)
}

/// Picks the threshold whose strict-`>` rule prunes about `target_s` of
/// tokens: the `(1 - target_s)`-quantile of the calibration set's
/// background probabilities (sorted ascending, index `ceil(q*n) - 1`).
pub fn theta_for_sparsity<F: Real>(bg_probs: &[F], target_s: f64) -> Result<f64, PruneError> {
    if !(0.0..1.0).contains(&target_s) {
        return Err(PruneError::BadSparsity(target_s));
    }
    if bg_probs.is_empty() {
        return Err(PruneError::EmptyCalibration);
    }
    let mut sorted: Vec<f64> = bg_probs.iter().map(|p| p.as_f64()).collect();
    sorted.sort_unstable_by(f64::total_cmp);
    let n = sorted.len();
    let q = 1.0 - target_s;
    let idx = ((q * n as f64).ceil() as usize).clamp(1, n) - 1;
    Ok(sorted[idx])
}

/// Transfers labels to a finer grid, keeping every label's relative
/// position: `dst(r, c) = src(floor(r * rows_s / rows_d), floor(c * cols_s
/// / cols_d))`. Equal grids copy unchanged.
pub fn upscale_labels(
    src: &TokenLabelMap,
    dst_grid: PatchGrid,
) -> Result<TokenLabelMap, PruneError> {
    let (sr, sc) = (src.grid.rows, src.grid.cols);
    let (dr, dc) = (dst_grid.rows, dst_grid.cols);
    if dr < sr || dc < sc {
        return Err(PruneError::DownscaleUnsupported {
            src_rows: sr,
            src_cols: sc,
            dst_rows: dr,
            dst_cols: dc,
        });
    }
    let mut labels = Vec::with_capacity(dst_grid.tokens());
    for r in 0..dr {
        let src_r = (r as u64 * sr as u64 / dr as u64) as usize;
        for c in 0..dc {
            let src_c = (c as u64 * sc as u64 / dc as u64) as usize;
            labels.push(src.get(src_r, src_c));
        }
    }
    Ok(TokenLabelMap::new(dst_grid, labels).expect("constructed labels fit the grid"))
}

/// Extracts the kept tokens in grid order. `dim` is the per-token vector
/// width; `tokens` holds all M token vectors contiguously.
pub fn apply_mask<F: Real>(
    tokens: &[F],
    dim: usize,
    mask: &PruneMask,
) -> Result<Vec<F>, PruneError> {
    let m = mask.keep.len();
    if tokens.len() != m * dim {
        return Err(PruneError::LengthMismatch {
            expected: m * dim,
            found: tokens.len(),
        });
    }
    let mut kept = Vec::with_capacity(mask.kept_count() * dim);
    for (t, &k) in mask.keep.iter().enumerate() {
        if k {
            kept.extend_from_slice(&tokens[t * dim..(t + 1) * dim]);
        }
    }
    Ok(kept)
}

/// Scatters processed tokens back to their grid positions. Pruned
/// positions come back as exact zero vectors — downstream consumers see a
/// full-length sequence where background costs nothing to compute.
pub fn restore_tokens<F: Real>(
    processed: &[F],
    dim: usize,
    mask: &PruneMask,
) -> Result<Vec<F>, PruneError> {
    let kept = mask.kept_count();
    if processed.len() != kept * dim {
        return Err(PruneError::LengthMismatch {
            expected: kept * dim,
            found: processed.len(),
        });
    }
    let mut out = vec![F::zero(); mask.keep.len() * dim];
    let mut src = 0;
    for (t, &k) in mask.keep.iter().enumerate() {
        if k {
            out[t * dim..(t + 1) * dim].copy_from_slice(&processed[src * dim..(src + 1) * dim]);
            src += 1;
        }
    }
    Ok(out)
}

/// Layer-weighted token counts for the front-end-plus-detector pairing:
/// the classifier contributes `bavit_tokens * bavit_layers` extra tokens,
/// while pruning removes work from `detector_tokens * detector_layers`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenBudget {
    pub detector_tokens: u64,
    pub detector_layers: u64,
    pub bavit_tokens: u64,
    pub bavit_layers: u64,
}

impl Default for TokenBudget {
    /// The published operating point: a 12-layer, 1024-token detector at
    /// 512x512 behind a 2-layer, 576-token classifier at 384x384.
    fn default() -> Self {
        Self {
            detector_tokens: 1024,
            detector_layers: 12,
            bavit_tokens: 576,
            bavit_layers: 2,
        }
    }
}

impl TokenBudget {
    /// Total detector tokens across layers (12288 at defaults).
    pub fn total_detector(&self) -> u64 {
        self.detector_tokens * self.detector_layers
    }

    /// Total classifier tokens across layers (1152 at defaults).
    pub fn total_bavit(&self) -> u64 {
        self.bavit_tokens * self.bavit_layers
    }
}

/// One row of the token-economics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    /// Fraction of detector tokens pruned.
    pub sparsity: f64,
    pub bavit_tokens: u64,
    pub detector_tokens: u64,
    /// Detector tokens that remain: `floor(detector_tokens * (1 - s))`.
    pub pruned_detector_tokens: u64,
    /// Remaining detector tokens plus the classifier's own tokens.
    pub combined_tokens: u64,
    /// Signed relative saving vs. the dense detector:
    /// `(detector - combined) / detector`. Negative when the classifier
    /// overhead outweighs the pruning.
    pub reduction: f64,
}

impl PruneReport {
    pub fn at(budget: &TokenBudget, sparsity: f64) -> Self {
        let ty = budget.total_detector();
        let tb = budget.total_bavit();
        let pruned = (ty as f64 * (1.0 - sparsity)).floor() as u64;
        let combined = pruned + tb;
        let reduction = (ty as f64 - combined as f64) / ty as f64;
        Self {
            sparsity,
            bavit_tokens: tb,
            detector_tokens: ty,
            pruned_detector_tokens: pruned,
            combined_tokens: combined,
            reduction,
        }
    }
}

/// Builds the full table for a list of sparsities.
pub fn economics_table(budget: &TokenBudget, sparsities: &[f64]) -> Vec<PruneReport> {
    sparsities
        .iter()
        .map(|&s| PruneReport::at(budget, s))
        .collect()
}

/// Mean relative token reduction over a set of images, each with its own
/// detector total, classifier total, and sparsity.
pub fn token_reduction(per_image: &[(u64, u64, f64)]) -> f64 {
    if per_image.is_empty() {
        return 0.0;
    }
    let sum: f64 = per_image
        .iter()
        .map(|&(ty, tb, s)| {
            let remaining = (ty as f64 * (1.0 - s)).floor();
            (ty as f64 - (tb as f64 + remaining)) / ty as f64
        })
        .sum();
    sum / per_image.len() as f64
}

/// Renders report rows as an aligned text table.
pub fn render_table(rows: &[PruneReport]) -> String {
    let mut out = String::from(
        "Sparsity  BAViT  Detector  Detector-Pruned  Combined  Reduction\n\
         --------  -----  --------  ---------------  --------  ---------\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{:>7.2}%  {:>5}  {:>8}  {:>15}  {:>8}  {:>8.2}%\n",
            r.sparsity * 100.0,
            r.bavit_tokens,
            r.detector_tokens,
            r.pruned_detector_tokens,
            r.combined_tokens,
            r.reduction * 100.0,
        ));
    }
    out
}
