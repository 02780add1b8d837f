use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgproc::{adaptive_threshold, crop, resize_bilinear, to_grayscale, ThresholdParams};
use crate::nn::{predict_batch, DenseNet};
use crate::registration::{align, border_median, warp_image, RegistrationConfig};
use crate::types::{BinaryImage, ColorImage, Detection, GrayImage, Raster, Similarity2D};

use super::localize::{localize_defects, LocalizeConfig};

/// Side of the square classifier input.
pub const CROP_SIZE: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub threshold: ThresholdParams,
    pub localize: LocalizeConfig,
    pub registration: RegistrationConfig,
    /// Context added around each box before resizing for the classifier.
    pub crop_pad: u32,
    /// Classifier weights; boxes stay unclassified without them.
    pub weights: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            threshold: ThresholdParams::default(),
            localize: LocalizeConfig::default(),
            registration: RegistrationConfig::default(),
            crop_pad: 5,
            weights: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.threshold.validate()?;
        self.localize.validate()
    }
}

/// Wall time per stage, seconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub registration: f64,
    pub binaryzation: f64,
    pub localization: f64,
    pub classification: f64,
    pub total: f64,
}

impl StageTimings {
    pub fn accumulate(&mut self, other: &StageTimings) {
        self.registration += other.registration;
        self.binaryzation += other.binaryzation;
        self.localization += other.localization;
        self.classification += other.classification;
        self.total += other.total;
    }

    pub fn scaled(&self, f: f64) -> StageTimings {
        StageTimings {
            registration: self.registration * f,
            binaryzation: self.binaryzation * f,
            localization: self.localization * f,
            classification: self.classification * f,
            total: self.total * f,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InspectionReport {
    /// Boxes in template coordinates, sorted by (ymin, xmin).
    pub detections: Vec<Detection>,
    /// Test-to-template mapping found by registration.
    pub transform: Similarity2D,
    pub inliers: usize,
    pub timings: StageTimings,
    /// Test image resampled onto the template grid.
    #[serde(skip)]
    pub registered: Option<ColorImage>,
}

/// Template-side work shared by every board inspected against it.
#[derive(Clone, Debug)]
pub struct PreparedTemplate {
    pub gray: GrayImage,
    pub binary: BinaryImage,
}

impl PreparedTemplate {
    pub fn new(template: &ColorImage, threshold: &ThresholdParams) -> Result<Self> {
        let gray = to_grayscale(template);
        let binary = adaptive_threshold(&gray, threshold)?;
        Ok(Self { gray, binary })
    }
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

/// Full inspection of one board: register, binarize, localize, classify.
pub fn inspect(
    template: &ColorImage,
    test: &ColorImage,
    model: Option<&DenseNet>,
    cfg: &PipelineConfig,
) -> Result<InspectionReport> {
    let t0 = Instant::now();
    let prepared = PreparedTemplate::new(template, &cfg.threshold)?;
    let mut report = inspect_prepared(&prepared, test, model, cfg)?;
    // template binarization counts toward its stage
    let total = secs(t0);
    report.timings.binaryzation += total - report.timings.total;
    report.timings.total = total;
    Ok(report)
}

pub fn inspect_prepared(
    template: &PreparedTemplate,
    test: &ColorImage,
    model: Option<&DenseNet>,
    cfg: &PipelineConfig,
) -> Result<InspectionReport> {
    cfg.validate()?;
    let mut timings = StageTimings::default();
    let start = Instant::now();

    let t = Instant::now();
    let alignment = align(&template.gray, &to_grayscale(test), &cfg.registration)?;
    let fill = border_median(test);
    let size = (template.gray.width(), template.gray.height());
    let registered = warp_image(test, &alignment.transform, size, &fill)?;
    timings.registration = secs(t);

    let t = Instant::now();
    let test_bin = adaptive_threshold(&to_grayscale(&registered), &cfg.threshold)?;
    timings.binaryzation = secs(t);

    let t = Instant::now();
    let mut detections = localize_defects(&template.binary, &test_bin, &cfg.localize)?;
    timings.localization = secs(t);

    let t = Instant::now();
    if let Some(model) = model {
        classify_detections(model, &registered, &mut detections, cfg.crop_pad)?;
    }
    timings.classification = secs(t);
    timings.total = secs(start);

    Ok(InspectionReport {
        detections,
        transform: alignment.transform,
        inliers: alignment.inliers,
        timings,
        registered: Some(registered),
    })
}

/// Padded crop resized to the classifier input.
pub fn classifier_crop(img: &ColorImage, det: &Detection, pad: u32) -> Result<ColorImage> {
    resize_bilinear(&crop(img, &det.bbox, pad)?, CROP_SIZE, CROP_SIZE)
}

/// Fills `class` and `probabilities` of every detection.
pub fn classify_detections(model: &DenseNet, img: &ColorImage, dets: &mut [Detection], pad: u32) -> Result<()> {
    if dets.is_empty() {
        return Ok(());
    }
    let crops = dets
        .iter()
        .map(|d| classifier_crop(img, d, pad))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&ColorImage> = crops.iter().collect();
    let out = predict_batch(model, &refs)?;
    if out.len() != dets.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} boxes",
            out.len(),
            dets.len()
        )));
    }
    for (d, (class, p)) in dets.iter_mut().zip(out) {
        d.class = Some(class);
        d.probabilities = Some(p);
    }
    Ok(())
}
