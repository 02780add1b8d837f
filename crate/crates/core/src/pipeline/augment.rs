//! Classifier training crops: each annotated defect plus shifted copies.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgproc::{crop, resize_bilinear};
use crate::io::read_color_png;
use crate::nn::LabeledCrop;
use crate::synthgen::{derive_seed, DatasetManifest};
use crate::types::{Annotation, BoundingBox, ColorImage, DefectClass, Raster};

use super::inspect::CROP_SIZE;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    /// Shifted copies per defect, on top of the original.
    pub extra: usize,
    /// Per-axis shift magnitude range, inclusive, pixels.
    pub offset: (u32, u32),
    /// Context around the box, as in inspection.
    pub pad: u32,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            extra: 3,
            offset: (5, 10),
            pad: 5,
            seed: 0xA11,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.offset.0 > self.offset.1 {
            return Err(Error::InvalidArgument(format!(
                "offset range {:?} is empty",
                self.offset
            )));
        }
        Ok(())
    }
}

/// All crops taken from one annotated defect.
#[derive(Clone, Debug, PartialEq)]
pub struct DefectCrops {
    pub class: DefectClass,
    /// `<image file>#<object index>`.
    pub source: String,
    pub crops: Vec<ColorImage>,
    /// Applied shift of each crop; the first is the unshifted original.
    pub offsets: Vec<(i32, i32)>,
}

impl DefectCrops {
    pub fn labeled(&self) -> impl Iterator<Item = LabeledCrop> + '_ {
        self.crops.iter().map(|c| LabeledCrop {
            image: c.clone(),
            class: self.class,
        })
    }
}

/// Moves `b` by `(dx, dy)`, reducing the shift where it would leave the
/// image. Returns the box and the shift actually applied.
fn shift_box(b: &BoundingBox, dx: i32, dy: i32, w: usize, h: usize) -> (BoundingBox, (i32, i32)) {
    let axis = |lo: u32, hi: u32, d: i32, size: usize| -> i32 {
        let min = -(lo as i64);
        let max = size as i64 - hi as i64;
        (d as i64).clamp(min.min(0), max.max(0)) as i32
    };
    let ax = axis(b.xmin, b.xmax, dx, w);
    let ay = axis(b.ymin, b.ymax, dy, h);
    let moved = BoundingBox {
        xmin: (b.xmin as i64 + ax as i64) as u32,
        ymin: (b.ymin as i64 + ay as i64) as u32,
        xmax: (b.xmax as i64 + ax as i64) as u32,
        ymax: (b.ymax as i64 + ay as i64) as u32,
    };
    (moved, (ax, ay))
}

/// Crops every annotated defect of `image` at its box and at `cfg.extra`
/// shifted positions. Each shift draws a magnitude in `cfg.offset` and a
/// random sign independently per axis.
pub fn augment_crops(
    image: &ColorImage,
    annotation: &Annotation,
    cfg: &AugmentConfig,
    seed: u64,
) -> Result<Vec<DefectCrops>> {
    cfg.validate()?;
    let (w, h) = (image.width(), image.height());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(annotation.objects.len());
    for (i, obj) in annotation.objects.iter().enumerate() {
        let mut crops = Vec::with_capacity(cfg.extra + 1);
        let mut offsets = Vec::with_capacity(cfg.extra + 1);
        for k in 0..=cfg.extra {
            let (bbox, applied) = if k == 0 {
                (obj.bbox, (0, 0))
            } else {
                let mut draw = || {
                    let m = rng.random_range(cfg.offset.0..=cfg.offset.1) as i32;
                    if rng.random_bool(0.5) {
                        m
                    } else {
                        -m
                    }
                };
                let (dx, dy) = (draw(), draw());
                shift_box(&obj.bbox, dx, dy, w, h)
            };
            crops.push(resize_bilinear(&crop(image, &bbox, cfg.pad)?, CROP_SIZE, CROP_SIZE)?);
            offsets.push(applied);
        }
        out.push(DefectCrops {
            class: obj.class,
            source: format!("{}#{i}", annotation.filename),
            crops,
            offsets,
        });
    }
    Ok(out)
}

/// Augmented crops of every board in a dataset, in manifest order.
pub fn collect_defect_crops(manifest: &DatasetManifest, cfg: &AugmentConfig) -> Result<Vec<DefectCrops>> {
    let per_board = manifest
        .boards
        .par_iter()
        .enumerate()
        .map(|(i, b)| {
            let img = read_color_png(manifest.image_path(b))?;
            augment_crops(&img, &b.annotation, cfg, derive_seed(cfg.seed, 0xC0, i as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_board.into_iter().flatten().collect())
}

#[derive(Clone, Debug, Default)]
pub struct CropSplit {
    pub train: Vec<LabeledCrop>,
    pub val: Vec<LabeledCrop>,
    pub test: Vec<LabeledCrop>,
}

/// Stratified train/val/test split. Whole defects are assigned to one side,
/// so shifted copies of a test defect never appear in training.
pub fn split_defects(defects: &[DefectCrops], fractions: (f64, f64), seed: u64) -> Result<CropSplit> {
    let (ft, fv) = fractions;
    if !(ft > 0.0 && fv >= 0.0 && ft + fv <= 1.0) {
        return Err(Error::InvalidArgument(format!("bad split fractions {fractions:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = CropSplit::default();
    for class in DefectClass::ALL {
        let mut idx: Vec<usize> = (0..defects.len()).filter(|&i| defects[i].class == class).collect();
        idx.shuffle(&mut rng);
        let n = idx.len() as f64;
        let n_train = (n * ft).round() as usize;
        let n_val = ((n * fv).round() as usize).min(idx.len() - n_train);
        for (k, &i) in idx.iter().enumerate() {
            let dst = if k < n_train {
                &mut split.train
            } else if k < n_train + n_val {
                &mut split.val
            } else {
                &mut split.test
            };
            dst.extend(defects[i].labeled());
        }
    }
    if split.train.is_empty() {
        return Err(Error::EmptyDataset("no training crops".into()));
    }
    Ok(split)
}
