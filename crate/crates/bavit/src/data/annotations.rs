//! Detection ground truth on disk.
//!
//! The native format is a small JSON document listing images and their boxes
//! in `x, y, w, h` pixel coordinates:
//!
//! ```json
//! {
//!   "images": [{"id": 1, "file": "img_00000.ppm", "width": 640, "height": 480}],
//!   "boxes":  [{"image_id": 1, "x": 10, "y": 20, "w": 100, "h": 200}]
//! }
//! ```
//!
//! COCO instance files can be converted into this shape; only the fields
//! above survive the conversion, and fractional COCO box coordinates are
//! rounded to whole pixels.

use crate::labeling::BoundingBox;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error at line {line}, column {column}: {message}")]
    Json {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("duplicate image id {0}")]
    DuplicateImageId(u32),
    #[error("box references unknown image id {0}")]
    UnknownImageId(u32),
    #[error("image {id} has empty dimensions {width}x{height}")]
    EmptyImage { id: u32, width: u32, height: u32 },
    #[error("zero-area box for image {image_id} at ({x}, {y})")]
    ZeroAreaBox { image_id: u32, x: u32, y: u32 },
}

fn json_err(e: serde_json::Error) -> AnnotationError {
    AnnotationError::Json {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: u32,
    pub file: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxRecord {
    pub image_id: u32,
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Annotations {
    pub images: Vec<ImageRecord>,
    pub boxes: Vec<BoxRecord>,
}

impl Annotations {
    /// Structural checks beyond what serde enforces: unique image ids, boxes
    /// pointing at known images, nothing zero-sized.
    pub fn validate(&self) -> Result<(), AnnotationError> {
        let mut ids = HashSet::new();
        for img in &self.images {
            if !ids.insert(img.id) {
                return Err(AnnotationError::DuplicateImageId(img.id));
            }
            if img.width == 0 || img.height == 0 {
                return Err(AnnotationError::EmptyImage {
                    id: img.id,
                    width: img.width,
                    height: img.height,
                });
            }
        }
        for b in &self.boxes {
            if !ids.contains(&b.image_id) {
                return Err(AnnotationError::UnknownImageId(b.image_id));
            }
            if b.w == 0 || b.h == 0 {
                return Err(AnnotationError::ZeroAreaBox {
                    image_id: b.image_id,
                    x: b.x,
                    y: b.y,
                });
            }
        }
        Ok(())
    }

    pub fn image(&self, id: u32) -> Option<&ImageRecord> {
        self.images.iter().find(|i| i.id == id)
    }

    /// All boxes of one image as half-open rectangles.
    pub fn boxes_for_image(&self, id: u32) -> Vec<BoundingBox> {
        self.boxes
            .iter()
            .filter(|b| b.image_id == id)
            .map(|b| BoundingBox {
                x_min: b.x,
                y_min: b.y,
                x_max: b.x + b.w,
                y_max: b.y + b.h,
            })
            .collect()
    }

    pub fn from_json(text: &str) -> Result<Self, AnnotationError> {
        let ann: Annotations = serde_json::from_str(text).map_err(json_err)?;
        ann.validate()?;
        Ok(ann)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("annotations always serialize")
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self, AnnotationError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<(), AnnotationError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

// The subset of the COCO instances schema the converter reads. Unknown
// fields (categories, segmentation polygons, ...) are ignored.
#[derive(Debug, Deserialize)]
struct CocoFile {
    images: Vec<CocoImage>,
    annotations: Vec<CocoAnnotation>,
}

#[derive(Debug, Deserialize)]
struct CocoImage {
    id: u64,
    file_name: String,
    width: u32,
    height: u32,
}

#[derive(Debug, Deserialize)]
struct CocoAnnotation {
    image_id: u64,
    bbox: [f64; 4],
}

/// Outcome of a COCO conversion: the annotations plus what was dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CocoImportStats {
    pub images: usize,
    pub boxes_kept: usize,
    pub boxes_dropped: usize,
}

/// Converts a COCO instances JSON document. COCO boxes are `[x, y, w, h]`
/// floats; each edge is rounded to the nearest pixel and clamped to the
/// image, and boxes that end up with zero area are dropped (counted in the
/// stats rather than failing the whole file). COCO image ids, which can be
/// large, are remapped to dense ids starting at 1.
pub fn import_coco(text: &str) -> Result<(Annotations, CocoImportStats), AnnotationError> {
    let coco: CocoFile = serde_json::from_str(text).map_err(json_err)?;
    let mut ann = Annotations::default();
    let mut stats = CocoImportStats::default();
    let mut id_map: HashMap<u64, (u32, u32, u32)> = HashMap::new();
    for (i, img) in coco.images.iter().enumerate() {
        let new_id = (i + 1) as u32;
        if id_map
            .insert(img.id, (new_id, img.width, img.height))
            .is_some()
        {
            return Err(AnnotationError::DuplicateImageId(new_id));
        }
        ann.images.push(ImageRecord {
            id: new_id,
            file: img.file_name.clone(),
            width: img.width,
            height: img.height,
        });
    }
    stats.images = ann.images.len();
    for a in &coco.annotations {
        let &(image_id, img_w, img_h) = id_map
            .get(&a.image_id)
            .ok_or(AnnotationError::UnknownImageId(a.image_id as u32))?;
        let [x, y, w, h] = a.bbox;
        let x0 = (x.round().max(0.0) as u32).min(img_w);
        let y0 = (y.round().max(0.0) as u32).min(img_h);
        let x1 = ((x + w).round().max(0.0) as u32).min(img_w);
        let y1 = ((y + h).round().max(0.0) as u32).min(img_h);
        if x1 <= x0 || y1 <= y0 {
            stats.boxes_dropped += 1;
            continue;
        }
        stats.boxes_kept += 1;
        ann.boxes.push(BoxRecord {
            image_id,
            x: x0,
            y: y0,
            w: x1 - x0,
            h: y1 - y0,
        });
    }
    ann.validate()?;
    Ok((ann, stats))
}
