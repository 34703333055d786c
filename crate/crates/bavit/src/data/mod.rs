//! Dataset plumbing: corpus layout on disk, batch assembly, and the image /
//! mask / box resampling used to reach the model resolution.
//!
//! A corpus directory looks like
//!
//! ```text
//! corpus/
//!   annotations.json      image table plus boxes (see [`annotations`])
//!   images/img_00000.ppm  one P6 file per image
//!   labels/img_00000.txt  per-token 0/1 labels in the label-map text format
//!   masks/img_00000.pgm   optional P5 class-id masks
//! ```
//!
//! Pixels stay `u8` until batch assembly, where they are normalized to
//! `(x - 0.5) / 0.5` (i.e. `[-1, 1]`) and rearranged into per-token patch
//! vectors ready for the embedding matmul.

pub mod annotations;
pub mod resize;
pub mod synth;

use crate::grid::{GridError, PatchGrid, TokenLabelMap};
use crate::linalg::Real;
use crate::ppm::{self, PpmError, RgbImage};
use annotations::{AnnotationError, Annotations, BoxRecord, ImageRecord};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use synth::SynthSample;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Ppm(#[from] PpmError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("{0}")]
    Shape(String),
}

/// One training example: an image and its per-token ground truth.
#[derive(Debug, Clone)]
pub struct Sample {
    pub image: RgbImage,
    pub labels: TokenLabelMap,
}

/// A batch laid out for the network: `x` is `[batch, tokens, patch_dim]`
/// row-major with `patch_dim = 3 * patch_size^2`, `y` is `[batch, tokens]`.
#[derive(Debug, Clone)]
pub struct Batch<F> {
    pub batch: usize,
    pub tokens: usize,
    pub patch_dim: usize,
    pub x: Vec<F>,
    pub y: Vec<u8>,
}

/// Flattens one image into per-token patch vectors, normalized to `[-1, 1]`.
/// Within a token the layout is pixel-major, channels interleaved:
/// `r(0,0) g(0,0) b(0,0) r(0,1) ...` in patch row-major order.
pub fn patchify_into<F: Real>(image: &RgbImage, grid: &PatchGrid, out: &mut Vec<F>) {
    debug_assert_eq!(image.width, grid.image_width);
    debug_assert_eq!(image.height, grid.image_height);
    let data = image.data();
    let w = image.width as usize;
    for row in 0..grid.rows {
        for col in 0..grid.cols {
            let (x0, y0, x1, y1) = grid.patch_rect(row, col);
            for y in y0..y1 {
                let base = (y as usize * w + x0 as usize) * 3;
                let run = &data[base..base + (x1 - x0) as usize * 3];
                for &b in run {
                    out.push(F::from_f64((b as f64 / 255.0 - 0.5) / 0.5));
                }
            }
        }
    }
}

/// Shuffles the samples and splits them into batches of `batch_size` (the
/// final batch may be smaller). All samples must share one grid shape.
pub fn make_batches<F: Real>(
    samples: &[Sample],
    grid: &PatchGrid,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Batch<F>>, DataError> {
    if batch_size == 0 {
        return Err(DataError::Shape("batch size must be positive".into()));
    }
    for (i, s) in samples.iter().enumerate() {
        if s.labels.grid != *grid {
            return Err(DataError::Shape(format!(
                "sample {i} has grid {:?}, expected {:?}",
                s.labels.grid, grid
            )));
        }
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(rng);
    let tokens = grid.tokens();
    let patch_dim = 3 * (grid.patch_size as usize) * (grid.patch_size as usize);
    let mut batches = Vec::with_capacity(order.len().div_ceil(batch_size));
    for chunk in order.chunks(batch_size) {
        let mut x = Vec::with_capacity(chunk.len() * tokens * patch_dim);
        let mut y = Vec::with_capacity(chunk.len() * tokens);
        for &idx in chunk {
            patchify_into(&samples[idx].image, grid, &mut x);
            y.extend_from_slice(samples[idx].labels.labels());
        }
        batches.push(Batch {
            batch: chunk.len(),
            tokens,
            patch_dim,
            x,
            y,
        });
    }
    Ok(batches)
}

fn stem_for(index: usize) -> String {
    format!("img_{index:05}")
}

/// Writes a generated corpus in the directory layout above and returns the
/// annotations document it saved.
pub fn save_corpus<P: AsRef<Path>>(
    dir: P,
    samples: &[SynthSample],
) -> Result<Annotations, DataError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir.join("images"))?;
    std::fs::create_dir_all(dir.join("masks"))?;
    std::fs::create_dir_all(dir.join("labels"))?;
    let mut ann = Annotations::default();
    for (i, s) in samples.iter().enumerate() {
        let stem = stem_for(i);
        let id = (i + 1) as u32;
        ppm::save_ppm(dir.join("images").join(format!("{stem}.ppm")), &s.image)?;
        let mask_img = ppm::GrayImage::new(s.mask.width, s.mask.height, s.mask.values().to_vec())
            .map_err(DataError::Shape)?;
        ppm::save_pgm(dir.join("masks").join(format!("{stem}.pgm")), &mask_img)?;
        std::fs::write(
            dir.join("labels").join(format!("{stem}.txt")),
            s.labels.to_text(),
        )?;
        ann.images.push(ImageRecord {
            id,
            file: format!("{stem}.ppm"),
            width: s.image.width,
            height: s.image.height,
        });
        for b in &s.boxes {
            ann.boxes.push(BoxRecord {
                image_id: id,
                x: b.x_min,
                y: b.y_min,
                w: (b.x_max - b.x_min),
                h: (b.y_max - b.y_min),
            });
        }
    }
    ann.save(dir.join("annotations.json"))?;
    Ok(ann)
}

/// Loads a corpus saved by [`save_corpus`] (or laid out by hand to match):
/// images via the annotation table, labels from the sibling `labels/` text
/// files.
pub fn load_corpus<P: AsRef<Path>>(dir: P) -> Result<Vec<Sample>, DataError> {
    let dir = dir.as_ref();
    let ann = Annotations::load(dir.join("annotations.json"))?;
    let mut samples = Vec::with_capacity(ann.images.len());
    for img in &ann.images {
        let image = ppm::load_ppm(dir.join("images").join(&img.file))?;
        if (image.width, image.height) != (img.width, img.height) {
            return Err(DataError::Shape(format!(
                "{}: file is {}x{} but annotations say {}x{}",
                img.file, image.width, image.height, img.width, img.height
            )));
        }
        let stem = img.file.trim_end_matches(".ppm");
        let label_path = dir.join("labels").join(format!("{stem}.txt"));
        let text = std::fs::read_to_string(&label_path)?;
        // The text format carries grid shape but not pixel geometry; recover
        // the patch size from the image this label map belongs to.
        let cols: u32 = text
            .split_whitespace()
            .nth(1)
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| DataError::Shape(format!("{stem}: malformed label header")))?;
        if cols == 0 || image.width % cols != 0 {
            return Err(DataError::Shape(format!(
                "{stem}: {cols} label columns do not tile a {}px-wide image",
                image.width
            )));
        }
        let labels =
            TokenLabelMap::from_text(&text, image.width / cols).map_err(DataError::Shape)?;
        if labels.grid.image_width != image.width || labels.grid.image_height != image.height {
            return Err(DataError::Shape(format!(
                "{stem}: label grid covers {}x{} but image is {}x{}",
                labels.grid.image_width, labels.grid.image_height, image.width, image.height
            )));
        }
        samples.push(Sample { image, labels });
    }
    Ok(samples)
}
