use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io::read_color_png;
use crate::nn::DenseNet;
use crate::synthgen::{BoardEntry, DatasetManifest};
use crate::types::{wrap_angle, DefectClass, Detection};

use super::inspect::{inspect_prepared, PipelineConfig, PreparedTemplate, StageTimings};
use super::metrics::{evaluate_classification, evaluate_detection, match_boxes, EvalResult, ImageBoxes};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkConfig {
    pub pipeline: PipelineConfig,
    /// Inspect the rotated copies instead of the straight images.
    pub rotated: bool,
    /// IoU at which a detection counts as finding a ground-truth box.
    pub match_iou: f64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            rotated: true,
            match_iou: 0.33,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoardOutcome {
    pub filename: String,
    pub class: DefectClass,
    pub detections: Vec<Detection>,
    /// Recovered minus planted rotation, degrees; rotated runs only.
    pub angle_error: Option<f64>,
    pub timings: StageTimings,
    /// Set when registration or I/O failed; the board then has no detections.
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub eval: EvalResult,
    pub mean_timings: StageTimings,
    pub boards: Vec<BoardOutcome>,
}

impl BenchmarkResult {
    pub fn max_abs_angle_error(&self) -> Option<f64> {
        self.boards
            .iter()
            .filter_map(|b| b.angle_error)
            .map(f64::abs)
            .reduce(f64::max)
    }
}

/// Inspects every board of the dataset against its template and scores the
/// result. Classification is scored only on detections matched one-to-one
/// to ground truth; duplicates and false alarms are left out.
pub fn run_benchmark(
    manifest: &DatasetManifest,
    model: Option<&DenseNet>,
    cfg: &BenchmarkConfig,
) -> Result<BenchmarkResult> {
    cfg.pipeline.validate()?;
    let templates: BTreeMap<&str, PreparedTemplate> = manifest
        .templates
        .iter()
        .map(|name| {
            let img = read_color_png(manifest.template_path(name))?;
            Ok((name.as_str(), PreparedTemplate::new(&img, &cfg.pipeline.threshold)?))
        })
        .collect::<Result<_>>()?;

    let boards: Vec<BoardOutcome> = manifest
        .boards
        .par_iter()
        .map(|b| {
            let rotated = cfg.rotated && b.angle.is_some();
            let run = || -> Result<_> {
                let tmpl = templates
                    .get(b.template.as_str())
                    .ok_or_else(|| crate::Error::MissingTemplate {
                        class: b.class.to_string(),
                        detail: format!("{} not in manifest", b.template),
                    })?;
                let path = if rotated {
                    manifest.rotated_path(b)
                } else {
                    manifest.image_path(b)
                };
                let test = read_color_png(path)?;
                inspect_prepared(tmpl, &test, model, &cfg.pipeline)
            };
            match run() {
                Ok(r) => BoardOutcome {
                    filename: b.filename.clone(),
                    class: b.class,
                    angle_error: b
                        .angle
                        .filter(|_| rotated)
                        .map(|a| wrap_angle((r.transform.angle_degrees() + a).to_radians()).to_degrees()),
                    detections: r.detections,
                    timings: r.timings,
                    error: None,
                },
                Err(e) => BoardOutcome {
                    filename: b.filename.clone(),
                    class: b.class,
                    detections: Vec::new(),
                    angle_error: None,
                    timings: StageTimings::default(),
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let eval = score_boards(&manifest.boards, &boards, model.is_some(), cfg.match_iou)?;

    let mut mean = StageTimings::default();
    let ok: Vec<&BoardOutcome> = boards.iter().filter(|b| b.error.is_none()).collect();
    ok.iter().for_each(|b| mean.accumulate(&b.timings));
    if !ok.is_empty() {
        mean = mean.scaled(1.0 / ok.len() as f64);
    }
    Ok(BenchmarkResult {
        eval,
        mean_timings: mean,
        boards,
    })
}

/// Scores inspection outcomes against the boards' annotations. With
/// `classified` set, P_c counts only detections matched one-to-one to ground
/// truth.
pub fn score_boards(
    truth: &[BoardEntry],
    boards: &[BoardOutcome],
    classified: bool,
    match_iou: f64,
) -> Result<EvalResult> {
    if truth.len() != boards.len() {
        return Err(crate::Error::InvalidArgument(format!(
            "{} annotated boards but {} outcomes",
            truth.len(),
            boards.len()
        )));
    }
    let images: Vec<ImageBoxes> = truth
        .iter()
        .zip(boards)
        .map(|(b, o)| ImageBoxes {
            detections: o.detections.iter().map(|d| d.bbox).collect(),
            truth: b.annotation.objects.iter().map(|o| (o.class, o.bbox)).collect(),
        })
        .collect();
    let mut eval = evaluate_detection(&images, match_iou)?;

    let (mut preds, mut labels) = (Vec::new(), Vec::new());
    for (img, o) in images.iter().zip(boards) {
        let truth: Vec<_> = img.truth.iter().map(|t| t.1).collect();
        for (d, m) in o.detections.iter().zip(match_boxes(&img.detections, &truth, match_iou)) {
            if let (Some(pred), Some(j)) = (d.class, m) {
                preds.push(pred);
                labels.push(img.truth[j].0);
            }
        }
    }
    if classified {
        let cls = evaluate_classification(&preds, &labels)?;
        eval.classification = cls.classification;
        eval.average_precision = cls.average_precision;
        eval.confusion = cls.confusion;
        eval.warnings.extend(cls.warnings);
    }
    for b in boards.iter().filter(|b| b.error.is_some()) {
        eval.warnings
            .push(format!("{}: {}", b.filename, b.error.as_deref().unwrap_or_default()));
    }
    Ok(eval)
}
