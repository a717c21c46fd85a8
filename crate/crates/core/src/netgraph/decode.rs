//! Turning grid outputs into concrete detections.

use crate::error::{Error, Result};
use crate::evaluation::{nms, Detection};
use crate::netgraph::forward::RawOutputs;
use crate::numerics::Scalar;
use crate::training::anchors::{decode_box, AnchorGrid};

/// Scores are clamped into this open interval before thresholding so that a
/// saturated sigmoid can never emit an exact 0 or 1.
const SCORE_CLAMP: f64 = 1e-7;

/// Inference-time decoding knobs.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DetectConfig {
    /// Minimum (clamped) score a detection must reach to be kept.
    pub score_threshold: f64,
    /// Greedy NMS suppression threshold.
    pub nms_iou: f64,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig { score_threshold: 0.5, nms_iou: 0.45 }
    }
}

impl DetectConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.nms_iou) {
            return Err(Error::Config(format!("nms_iou must be in [0, 1], got {}", self.nms_iou)));
        }
        if !self.score_threshold.is_finite() {
            return Err(Error::Config("score_threshold must be finite".into()));
        }
        Ok(())
    }
}

/// Decodes per-anchor scores and deltas into scored boxes.
///
/// Every anchor whose clamped score reaches `score_threshold` is decoded
/// through the inverse box parameterization, clipped to the image, and the
/// survivors run through greedy NMS. The result is sorted by descending
/// score. Since scores live in the open interval (clamped away from 0 and
/// 1), a threshold of 1.0 always yields an empty list.
pub fn decode_detections<S: Scalar>(
    raw: &RawOutputs<S>,
    grid: &AnchorGrid,
    config: &DetectConfig,
) -> Result<Vec<Detection>> {
    config.validate()?;
    if raw.grid_h != grid.grid_h || raw.grid_w != grid.grid_w {
        return Err(Error::Shape(format!(
            "output grid {}x{} does not match anchor grid {}x{}",
            raw.grid_h, raw.grid_w, grid.grid_h, grid.grid_w
        )));
    }
    let n_anchors = grid.anchors_per_cell();
    if raw.cls_prob.shape() != [raw.grid_h, raw.grid_w, n_anchors] {
        return Err(Error::Shape(format!(
            "cls_prob shape {:?} does not match {} anchors per cell",
            raw.cls_prob.shape(),
            n_anchors
        )));
    }
    if raw.bbox_delta.shape() != [raw.grid_h, raw.grid_w, 4 * n_anchors] {
        return Err(Error::Shape(format!(
            "bbox_delta shape {:?} does not match {} anchors per cell",
            raw.bbox_delta.shape(),
            n_anchors
        )));
    }

    let image_w = (grid.grid_w * grid.stride) as f64;
    let image_h = (grid.grid_h * grid.stride) as f64;
    let probs = raw.cls_prob.data();
    let deltas = raw.bbox_delta.data();

    let mut detections = Vec::new();
    for cell in 0..grid.grid_h * grid.grid_w {
        for a in 0..n_anchors {
            let anchor_index = cell * n_anchors + a;
            let score = probs[anchor_index].widen().clamp(SCORE_CLAMP, 1.0 - SCORE_CLAMP);
            if score < config.score_threshold {
                continue;
            }
            let base = cell * 4 * n_anchors + a * 4;
            let d = [
                deltas[base].widen(),
                deltas[base + 1].widen(),
                deltas[base + 2].widen(),
                deltas[base + 3].widen(),
            ];
            let decoded = decode_box(&grid.boxes[anchor_index], &d)?;
            if let Some(clipped) = decoded.clipped_to(image_w, image_h) {
                detections.push(Detection { bbox: clipped, score });
            }
        }
    }
    Ok(nms(&detections, config.nms_iou))
}
