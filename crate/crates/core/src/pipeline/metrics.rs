//! Detection error rate, per-class precision and their six-class average.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{BoundingBox, DefectClass};

/// `|d - a| / a * 100`, undefined when nothing was expected.
pub fn detection_error_rate(detected: usize, actual: usize) -> Option<f64> {
    (actual > 0).then(|| (detected as f64 - actual as f64).abs() / actual as f64 * 100.0)
}

/// Arithmetic mean of the defined entries.
pub fn average_precision(per_class: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassDetection {
    pub class: DefectClass,
    pub detected: usize,
    pub actual: usize,
    /// Percent; `None` when the class has no ground truth.
    pub error_rate: Option<f64>,
    /// Ground-truth boxes hit by a detection at the matching IoU.
    pub matched: usize,
    /// Detections left over after one-to-one matching.
    pub unmatched: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassPrecision {
    pub class: DefectClass,
    pub correct: usize,
    pub total: usize,
    /// Percent; `None` when the class has no labels.
    pub precision: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub detection: Vec<ClassDetection>,
    pub classification: Vec<ClassPrecision>,
    /// Mean of the defined per-class precisions, percent.
    pub average_precision: Option<f64>,
    /// Rows are true classes, columns predictions, both in class order.
    pub confusion: [[usize; 6]; 6],
    pub warnings: Vec<String>,
}

impl EvalResult {
    pub fn detection_of(&self, class: DefectClass) -> Option<&ClassDetection> {
        self.detection.iter().find(|d| d.class == class)
    }

    pub fn precision_of(&self, class: DefectClass) -> Option<&ClassPrecision> {
        self.classification.iter().find(|c| c.class == class)
    }
}

/// Detections and ground truth of one image.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBoxes {
    pub detections: Vec<BoundingBox>,
    pub truth: Vec<(DefectClass, BoundingBox)>,
}

/// One-to-one greedy matching: pairs are taken in descending IoU order
/// (ties by detection then truth index) while IoU >= `min_iou`. Returns, per
/// detection, the matched truth index.
pub fn match_boxes(detections: &[BoundingBox], truth: &[BoundingBox], min_iou: f64) -> Vec<Option<usize>> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, d) in detections.iter().enumerate() {
        for (j, t) in truth.iter().enumerate() {
            let iou = d.iou(t);
            if iou >= min_iou && iou > 0.0 {
                pairs.push((iou, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut det_to = vec![None; detections.len()];
    let mut taken = vec![false; truth.len()];
    for (_, i, j) in pairs {
        if det_to[i].is_none() && !taken[j] {
            det_to[i] = Some(j);
            taken[j] = true;
        }
    }
    det_to
}

/// Per-class detected and actual counts. A matched detection counts for its
/// truth's class; an unmatched one for the most frequent class of its image
/// (lowest ordinal on ties). Images without truth contribute no counts but
/// raise a warning when they have detections.
pub fn evaluate_detection(images: &[ImageBoxes], match_iou: f64) -> Result<EvalResult> {
    if !(0.0..=1.0).contains(&match_iou) {
        return Err(Error::InvalidArgument(format!(
            "match_iou must be in [0, 1], got {match_iou}"
        )));
    }
    let mut detected = [0usize; 6];
    let mut actual = [0usize; 6];
    let mut matched = [0usize; 6];
    let mut unmatched = [0usize; 6];
    let mut warnings = Vec::new();
    for (k, img) in images.iter().enumerate() {
        for (c, _) in &img.truth {
            actual[c.ordinal()] += 1;
        }
        let mut freq = [0usize; 6];
        img.truth.iter().for_each(|(c, _)| freq[c.ordinal()] += 1);
        let majority = (0..6)
            .max_by_key(|&i| (freq[i], std::cmp::Reverse(i)))
            .filter(|&i| freq[i] > 0);
        let boxes: Vec<BoundingBox> = img.truth.iter().map(|(_, b)| *b).collect();
        for m in match_boxes(&img.detections, &boxes, match_iou) {
            match (m, majority) {
                (Some(j), _) => {
                    let c = img.truth[j].0.ordinal();
                    detected[c] += 1;
                    matched[c] += 1;
                }
                (None, Some(c)) => {
                    detected[c] += 1;
                    unmatched[c] += 1;
                }
                (None, None) => warnings.push(format!("image {k}: detection without any ground truth")),
            }
        }
    }
    let detection = DefectClass::ALL
        .iter()
        .map(|&class| {
            let i = class.ordinal();
            ClassDetection {
                class,
                detected: detected[i],
                actual: actual[i],
                error_rate: detection_error_rate(detected[i], actual[i]),
                matched: matched[i],
                unmatched: unmatched[i],
            }
        })
        .collect();
    Ok(EvalResult {
        detection,
        warnings,
        ..Default::default()
    })
}

/// Per-class precision `c / a * 100`, their mean over the classes present
/// in `labels`, and the confusion matrix.
pub fn evaluate_classification(predictions: &[DefectClass], labels: &[DefectClass]) -> Result<EvalResult> {
    if predictions.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut confusion = [[0usize; 6]; 6];
    for (p, l) in predictions.iter().zip(labels) {
        confusion[l.ordinal()][p.ordinal()] += 1;
    }
    let mut warnings = Vec::new();
    let classification: Vec<ClassPrecision> = DefectClass::ALL
        .iter()
        .map(|&class| {
            let row = &confusion[class.ordinal()];
            let total: usize = row.iter().sum();
            let correct = row[class.ordinal()];
            if total == 0 {
                warnings.push(format!("no {class} samples; left out of the average"));
            }
            ClassPrecision {
                class,
                correct,
                total,
                precision: (total > 0).then(|| correct as f64 / total as f64 * 100.0),
            }
        })
        .collect();
    let ap = average_precision(&classification.iter().map(|c| c.precision).collect::<Vec<_>>());
    Ok(EvalResult {
        classification,
        average_precision: ap,
        confusion,
        warnings,
        ..Default::default()
    })
}
