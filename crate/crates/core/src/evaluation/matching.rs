//! Ignore-aware greedy matching of detections to ground truth.

use crate::dataio::Annotation;
use crate::error::{Error, Result};
use crate::evaluation::{iou, Detection};

/// Selects which annotations count as real ground truth for scoring.
///
/// Annotations failing the filter are demoted to ignore regions rather than
/// dropped: detections overlapping them are neither true nor false
/// positives, and missing them is not a miss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReasonableFilter {
    /// Minimum box height in pixels.
    pub min_height: f64,
    /// Minimum visible fraction.
    pub min_visibility: f64,
}

impl ReasonableFilter {
    /// The standard filter scaled to an image of height `image_h`: height at
    /// least `55 * image_h / 512` pixels and visibility at least 0.5.
    pub fn for_image_height(image_h: usize) -> Self {
        ReasonableFilter { min_height: 55.0 * image_h as f64 / 512.0, min_visibility: 0.5 }
    }

    /// True when the annotation should be scored as real ground truth.
    pub fn keeps(&self, ann: &Annotation) -> bool {
        !ann.ignore && ann.bbox.h >= self.min_height && ann.visibility >= self.min_visibility
    }
}

/// Outcome of a single detection after matching.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DetOutcome {
    /// Matched a real, previously unmatched ground truth.
    TruePositive,
    /// Matched nothing.
    FalsePositive,
    /// Overlapped only ignore regions; dropped from scoring.
    Ignored,
}

/// Matching result for one frame.
///
/// `outcomes` is sorted by descending score; because greedy matching in
/// score order never lets a lower-scored detection influence a higher-scored
/// one's outcome, thresholding this list at any score reproduces exactly
/// what matching only the detections above that score would produce.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameResult {
    /// `(score, outcome)` per detection, descending score.
    pub outcomes: Vec<(f64, DetOutcome)>,
    /// Number of real (filter-passing, non-ignore) ground truths.
    pub n_gt: usize,
}

impl FrameResult {
    /// Counts `(tp, fp)` among detections with score >= `threshold`.
    pub fn counts_at(&self, threshold: f64) -> (usize, usize) {
        let mut tp = 0;
        let mut fp = 0;
        for &(score, outcome) in &self.outcomes {
            if score < threshold {
                break;
            }
            match outcome {
                DetOutcome::TruePositive => tp += 1,
                DetOutcome::FalsePositive => fp += 1,
                DetOutcome::Ignored => {}
            }
        }
        (tp, fp)
    }
}

/// Greedily matches detections against one frame's annotations.
///
/// Detections are processed in descending score order (ties keep input
/// order). Each detection first tries to claim the unmatched real ground
/// truth of highest IoU, provided that IoU is at least 0.5; failing that, if
/// it overlaps any ignore region (including filter-demoted annotations) with
/// IoU at least 0.5 it is ignored; otherwise it is a false positive. Ignore
/// regions are never consumed: any number of detections may be absorbed by
/// one.
pub fn match_frame(
    detections: &[Detection],
    annotations: &[Annotation],
    filter: &ReasonableFilter,
) -> Result<FrameResult> {
    for det in detections {
        det.bbox.ensure_valid("detection")?;
        if !det.score.is_finite() {
            return Err(Error::Numeric(format!("non-finite detection score {}", det.score)));
        }
    }
    for ann in annotations {
        ann.bbox.ensure_valid("annotation")?;
    }

    let real: Vec<&Annotation> = annotations.iter().filter(|a| filter.keeps(a)).collect();
    let ignores: Vec<&Annotation> = annotations.iter().filter(|a| !filter.keeps(a)).collect();

    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| detections[b].score.total_cmp(&detections[a].score));

    let mut gt_matched = vec![false; real.len()];
    let mut outcomes = Vec::with_capacity(detections.len());
    for idx in order {
        let det = &detections[idx];
        let mut best: Option<(f64, usize)> = None;
        for (gi, gt) in real.iter().enumerate() {
            if gt_matched[gi] {
                continue;
            }
            let overlap = iou(&det.bbox, &gt.bbox);
            // Ties on IoU go to the earlier annotation (strict improvement
            // required to replace the running best).
            if overlap >= 0.5 && best.map_or(true, |(b, _)| overlap > b) {
                best = Some((overlap, gi));
            }
        }
        let outcome = if let Some((_, gi)) = best {
            gt_matched[gi] = true;
            DetOutcome::TruePositive
        } else if ignores.iter().any(|ig| iou(&det.bbox, &ig.bbox) >= 0.5) {
            DetOutcome::Ignored
        } else {
            DetOutcome::FalsePositive
        };
        outcomes.push((det.score, outcome));
    }
    Ok(FrameResult { outcomes, n_gt: real.len() })
}
