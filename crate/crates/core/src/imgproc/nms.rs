use std::cmp::Ordering;

use crate::types::Detection;

/// Greedy non-maximum suppression.
///
/// Candidates are visited by descending score (ties by `(ymin, xmin)`); a
/// candidate is dropped when its IoU with an already kept box reaches
/// `iou_threshold`.
pub fn nms(mut dets: Vec<Detection>, iou_threshold: f64) -> Vec<Detection> {
    dets.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then((a.bbox.ymin, a.bbox.xmin).cmp(&(b.bbox.ymin, b.bbox.xmin)))
    });
    let mut kept: Vec<Detection> = Vec::with_capacity(dets.len());
    for d in dets {
        if kept.iter().all(|k| k.bbox.iou(&d.bbox) < iou_threshold) {
            kept.push(d);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::BoundingBox;
    use proptest::prelude::*;

    fn det(x0: u32, y0: u32, x1: u32, y1: u32, score: f64) -> Detection {
        Detection::unclassified(BoundingBox::new(x0, y0, x1, y1).unwrap(), score)
    }

    #[test]
    fn disjoint_boxes_survive() {
        let d = vec![det(0, 0, 5, 5, 1.0), det(10, 10, 15, 15, 2.0), det(20, 0, 25, 5, 3.0)];
        assert_eq!(nms(d, 0.3).len(), 3);
    }

    #[test]
    fn identical_boxes_collapse() {
        let d = vec![det(0, 0, 5, 5, 25.0), det(0, 0, 5, 5, 25.0)];
        assert_eq!(nms(d, 0.3).len(), 1);
    }

    #[test]
    fn larger_area_wins() {
        // B (area 200) lies inside A (area 400): IoU = 200 / 400.
        let a = det(0, 0, 20, 20, 400.0);
        let b = det(10, 0, 20, 20, 200.0);
        assert_eq!(a.bbox.iou(&b.bbox), 0.5);
        let kept = nms(vec![b, a.clone()], 0.3);
        assert_eq!(kept, vec![a]);
    }

    proptest! {
        #[test]
        fn output_is_consistent_subset(
            raw in proptest::collection::vec((0u32..60, 0u32..60, 1u32..20, 1u32..20, 1u32..500), 0..25),
            thr in 0.05f64..0.9,
        ) {
            let input: Vec<_> = raw.iter().map(|&(x, y, w, h, s)| det(x, y, x + w, y + h, s as f64)).collect();
            let kept = nms(input.clone(), thr);
            for k in &kept {
                prop_assert!(input.contains(k));
            }
            for i in 0..kept.len() {
                for j in i + 1..kept.len() {
                    prop_assert!(kept[i].bbox.iou(&kept[j].bbox) < thr);
                }
            }
        }
    }
}
