//! Reference-comparison inspection and its evaluation metrics.

mod augment;
mod benchmark;
mod inspect;
mod localize;
mod metrics;
mod report;

pub use augment::{augment_crops, collect_defect_crops, split_defects, AugmentConfig, CropSplit, DefectCrops};
pub use benchmark::{run_benchmark, score_boards, BenchmarkConfig, BenchmarkResult, BoardOutcome};
pub use inspect::{
    classifier_crop, classify_detections, inspect, inspect_prepared, InspectionReport, PipelineConfig,
    PreparedTemplate, StageTimings, CROP_SIZE,
};
pub use localize::{default_schedule, filtered_difference, localize_defects, LocalizeConfig, MorphOp, MorphStep};
pub use metrics::{
    average_precision, detection_error_rate, evaluate_classification, evaluate_detection, match_boxes, ClassDetection,
    ClassPrecision, EvalResult, ImageBoxes,
};
pub use report::{class_color, draw_overlay, CLASS_COLORS};
