//! Detection evaluation: IoU, non-maximum suppression, ignore-aware
//! matching, miss-rate/FPPI curves, and whole-model reports.

mod curve;
mod matching;
mod report;

pub use curve::{log_average, mr_curve, reference_fppi_points, EvalCurve, OperatingPoint};
pub use matching::{match_frame, DetOutcome, FrameResult, ReasonableFilter};
pub use report::{
    detect_frame, evaluate_detections, evaluate_model, read_detections, write_detections,
    EvalReport, SubsetReport,
};

use crate::boxes::BBox;

/// One scored detection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    /// Confidence in the open interval (0, 1).
    pub score: f64,
}

/// Intersection over union of two boxes; 0 when they are disjoint or the
/// union is empty.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// Greedy non-maximum suppression.
///
/// Detections are visited in descending score order (ties keep the earlier
/// list position); a detection is dropped when its IoU with an already-kept
/// detection exceeds `iou_threshold`. The kept detections are returned in
/// descending score order.
pub fn nms(detections: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    // Stable sort: equal scores keep their input order.
    order.sort_by(|&a, &b| detections[b].score.total_cmp(&detections[a].score));
    let mut kept: Vec<Detection> = Vec::new();
    for idx in order {
        let cand = detections[idx];
        if kept.iter().all(|k| iou(&k.bbox, &cand.bbox) <= iou_threshold) {
            kept.push(cand);
        }
    }
    kept
}
