//! Patch-grid geometry shared by labeling, pruning, post-processing and rendering.
//!
//! An image of `width x height` pixels is tiled by non-overlapping square
//! patches of `patch_size` pixels. Patches are indexed in row-major order, so
//! token `i` sits at grid row `i / cols`, column `i % cols`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GridError {
    #[error("image {width}x{height} is not an exact multiple of patch size {patch_size}")]
    NotTileable {
        width: u32,
        height: u32,
        patch_size: u32,
    },
    #[error("patch size must be nonzero")]
    ZeroPatchSize,
    #[error("grid has zero extent ({rows}x{cols})")]
    EmptyGrid { rows: usize, cols: usize },
    #[error("label map has {got} entries, grid expects {expected}")]
    LabelLengthMismatch { got: usize, expected: usize },
    #[error("label value {value} at index {index} is not binary")]
    NonBinaryLabel { value: u8, index: usize },
}

/// Geometry of a regular patch tiling of an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGrid {
    pub image_width: u32,
    pub image_height: u32,
    pub patch_size: u32,
    pub rows: usize,
    pub cols: usize,
}

impl PatchGrid {
    /// Builds the grid for an image that tiles exactly; images whose
    /// dimensions are not multiples of the patch size are rejected.
    pub fn new(image_width: u32, image_height: u32, patch_size: u32) -> Result<Self, GridError> {
        if patch_size == 0 {
            return Err(GridError::ZeroPatchSize);
        }
        if !image_width.is_multiple_of(patch_size) || !image_height.is_multiple_of(patch_size) {
            return Err(GridError::NotTileable {
                width: image_width,
                height: image_height,
                patch_size,
            });
        }
        let rows = (image_height / patch_size) as usize;
        let cols = (image_width / patch_size) as usize;
        if rows == 0 || cols == 0 {
            return Err(GridError::EmptyGrid { rows, cols });
        }
        Ok(Self {
            image_width,
            image_height,
            patch_size,
            rows,
            cols,
        })
    }

    /// Square grid helper: `side x side` pixels.
    pub fn square(side: u32, patch_size: u32) -> Result<Self, GridError> {
        Self::new(side, side, patch_size)
    }

    /// Total token count `M = rows * cols`.
    pub fn tokens(&self) -> usize {
        self.rows * self.cols
    }

    /// Row-major token index for a grid cell.
    pub fn index(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.rows && col < self.cols);
        row * self.cols + col
    }

    /// Pixel rectangle `[x_min, x_max) x [y_min, y_max)` of a grid cell.
    pub fn patch_rect(&self, row: usize, col: usize) -> (u32, u32, u32, u32) {
        let k = self.patch_size;
        let x_min = col as u32 * k;
        let y_min = row as u32 * k;
        (x_min, y_min, x_min + k, y_min + k)
    }
}

/// Per-patch binary foreground/background labels in row-major grid order.
///
/// `1` marks a foreground token, `0` background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenLabelMap {
    pub grid: PatchGrid,
    labels: Vec<u8>,
}

impl TokenLabelMap {
    pub fn new(grid: PatchGrid, labels: Vec<u8>) -> Result<Self, GridError> {
        if labels.len() != grid.tokens() {
            return Err(GridError::LabelLengthMismatch {
                got: labels.len(),
                expected: grid.tokens(),
            });
        }
        if let Some((index, &value)) = labels.iter().enumerate().find(|(_, &v)| v > 1) {
            return Err(GridError::NonBinaryLabel { value, index });
        }
        Ok(Self { grid, labels })
    }

    pub fn all_background(grid: PatchGrid) -> Self {
        let labels = vec![0u8; grid.tokens()];
        Self { grid, labels }
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.labels[self.grid.index(row, col)]
    }

    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        debug_assert!(value <= 1);
        let i = self.grid.index(row, col);
        self.labels[i] = value;
    }

    /// Number of foreground tokens.
    pub fn fg_count(&self) -> usize {
        self.labels.iter().filter(|&&v| v == 1).count()
    }

    /// Foreground fraction over all tokens.
    pub fn fg_fraction(&self) -> f64 {
        self.fg_count() as f64 / self.grid.tokens() as f64
    }

    /// Serializes to the label-map text format: a `rows cols` header line
    /// followed by one row-major line of `0`/`1` characters.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.labels.len() + 16);
        out.push_str(&format!("{} {}\n", self.grid.rows, self.grid.cols));
        for &v in &self.labels {
            out.push(if v == 1 { '1' } else { '0' });
        }
        out.push('\n');
        out
    }

    /// Parses the text format produced by [`TokenLabelMap::to_text`]. The
    /// grid's pixel geometry is reconstructed from `patch_size`.
    pub fn from_text(text: &str, patch_size: u32) -> Result<Self, String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("empty label file")?;
        let mut parts = header.split_whitespace();
        let rows: usize = parts
            .next()
            .ok_or("missing rows in header")?
            .parse()
            .map_err(|e| format!("bad rows: {e}"))?;
        let cols: usize = parts
            .next()
            .ok_or("missing cols in header")?
            .parse()
            .map_err(|e| format!("bad cols: {e}"))?;
        let body = lines.next().ok_or("missing label line")?;
        let grid = PatchGrid::new(
            cols as u32 * patch_size,
            rows as u32 * patch_size,
            patch_size,
        )
        .map_err(|e| e.to_string())?;
        let labels: Result<Vec<u8>, String> = body
            .chars()
            .map(|c| match c {
                '0' => Ok(0u8),
                '1' => Ok(1u8),
                other => Err(format!("unexpected label character {other:?}")),
            })
            .collect();
        Self::new(grid, labels?).map_err(|e| e.to_string())
    }
}
