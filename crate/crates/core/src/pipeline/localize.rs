use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgproc::{
    close, connected_components, dilate, erode, median_filter, nms, open, xor_diff, Connectivity, ElementShape,
    StructElem,
};
use crate::types::{BinaryImage, Detection};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MorphOp {
    Median,
    Open,
    Close,
    Erode,
    Dilate,
}

/// One row of the filtering schedule. A median uses `width` as its aperture
/// and ignores `shape`/`height`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MorphStep {
    pub op: MorphOp,
    pub shape: ElementShape,
    pub width: usize,
    pub height: usize,
}

impl MorphStep {
    pub const fn median(k: usize) -> Self {
        Self {
            op: MorphOp::Median,
            shape: ElementShape::Rectangle,
            width: k,
            height: k,
        }
    }

    pub const fn rect(op: MorphOp, k: usize) -> Self {
        Self {
            op,
            shape: ElementShape::Rectangle,
            width: k,
            height: k,
        }
    }

    pub const fn ellipse(op: MorphOp, k: usize) -> Self {
        Self {
            op,
            shape: ElementShape::Ellipse,
            width: k,
            height: k,
        }
    }

    pub fn element(&self) -> Result<StructElem> {
        StructElem::new(self.shape, self.width, self.height)
    }

    pub fn apply(&self, img: &BinaryImage) -> Result<BinaryImage> {
        if self.op == MorphOp::Median {
            return median_filter(img, self.width);
        }
        let e = self.element()?;
        Ok(match self.op {
            MorphOp::Open => open(img, &e),
            MorphOp::Close => close(img, &e),
            MorphOp::Erode => erode(img, &e),
            MorphOp::Dilate => dilate(img, &e),
            MorphOp::Median => unreachable!(),
        })
    }
}

/// The seven-step filtering and morphology schedule. The final 1x1 opening
/// is a no-op.
pub fn default_schedule() -> Vec<MorphStep> {
    vec![
        MorphStep::median(5),
        MorphStep::rect(MorphOp::Close, 15),
        MorphStep::rect(MorphOp::Open, 3),
        MorphStep::median(5),
        MorphStep::ellipse(MorphOp::Close, 29),
        MorphStep::rect(MorphOp::Open, 3),
        MorphStep::rect(MorphOp::Open, 1),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalizeConfig {
    pub schedule: Vec<MorphStep>,
    pub min_area: u64,
    pub nms_iou: f64,
}

impl Default for LocalizeConfig {
    fn default() -> Self {
        Self {
            schedule: default_schedule(),
            min_area: 50,
            nms_iou: 0.3,
        }
    }
}

impl LocalizeConfig {
    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.schedule.iter().enumerate() {
            let ok = if s.op == MorphOp::Median {
                s.width % 2 == 1
            } else {
                s.element().is_ok()
            };
            if !ok {
                return Err(Error::InvalidArgument(format!(
                    "schedule step {} ({:?} {}x{}) needs odd sizes",
                    i + 1,
                    s.op,
                    s.width,
                    s.height
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.nms_iou) {
            return Err(Error::InvalidArgument(format!(
                "nms_iou must be in [0, 1], got {}",
                self.nms_iou
            )));
        }
        Ok(())
    }
}

/// XOR mask after every schedule step, for inspection and figures.
pub fn filtered_difference(
    template_bin: &BinaryImage,
    test_bin: &BinaryImage,
    cfg: &LocalizeConfig,
) -> Result<BinaryImage> {
    let mut img = xor_diff(template_bin, test_bin)?;
    for step in &cfg.schedule {
        img = step.apply(&img)?;
    }
    Ok(img)
}

/// Candidate defect boxes from two binarized, aligned images. Scores are
/// component areas; output is sorted by `(ymin, xmin)`.
pub fn localize_defects(
    template_bin: &BinaryImage,
    test_bin: &BinaryImage,
    cfg: &LocalizeConfig,
) -> Result<Vec<Detection>> {
    let mask = filtered_difference(template_bin, test_bin, cfg)?;
    let candidates: Vec<Detection> = connected_components(&mask, Connectivity::Eight)
        .into_iter()
        .filter(|c| c.area >= cfg.min_area)
        .map(|c| Detection::unclassified(c.bbox, c.area as f64))
        .collect();
    let mut kept = nms(candidates, cfg.nms_iou);
    kept.sort_by_key(|d| (d.bbox.ymin, d.bbox.xmin));
    Ok(kept)
}
