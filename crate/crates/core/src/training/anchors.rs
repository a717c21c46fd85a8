//! Anchor grids, ground-truth assignment, box encoding, and minibatch
//! sampling.

use rand::Rng;

use crate::boxes::BBox;
use crate::dataio::Annotation;
use crate::error::{Error, Result};
use crate::evaluation::iou;

/// One anchor shape: a height in pixels and a width/height aspect ratio.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AnchorTemplate {
    pub height: f64,
    pub aspect: f64,
}

impl AnchorTemplate {
    /// Anchor width implied by the template.
    pub fn width(&self) -> f64 {
        self.aspect * self.height
    }
}

/// The default pedestrian anchor set: heights 24/32/44/60 px at aspect 0.41.
pub fn default_templates() -> Vec<AnchorTemplate> {
    [24.0, 32.0, 44.0, 60.0]
        .into_iter()
        .map(|height| AnchorTemplate { height, aspect: 0.41 })
        .collect()
}

/// A dense anchor grid over the feature map.
///
/// Anchors are ordered `(y, x, a)` with the template index fastest, matching
/// the `[grid_h, grid_w, A]` layout of the head outputs: the anchor at flat
/// index `i` corresponds to cell `i / A` and template `i % A`.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorGrid {
    pub stride: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    pub templates: Vec<AnchorTemplate>,
    /// All anchor boxes, `grid_h * grid_w * templates.len()` of them.
    pub boxes: Vec<BBox>,
}

impl AnchorGrid {
    /// Total number of anchors.
    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    /// True when the grid holds no anchors.
    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    /// Number of templates per grid cell.
    pub fn anchors_per_cell(&self) -> usize {
        self.templates.len()
    }
}

/// Builds the anchor grid for an image of the given size.
///
/// Anchor centers sit at `((x + 0.5) * stride, (y + 0.5) * stride)`; the
/// image size must be an exact multiple of the stride. Anchors near the
/// border may extend outside the image; they are kept.
pub fn generate_anchors(
    image_h: usize,
    image_w: usize,
    stride: usize,
    templates: &[AnchorTemplate],
) -> Result<AnchorGrid> {
    if stride == 0 {
        return Err(Error::Config("anchor stride must be >= 1".into()));
    }
    if image_h % stride != 0 || image_w % stride != 0 {
        return Err(Error::Shape(format!(
            "image size {image_w}x{image_h} is not a multiple of stride {stride}"
        )));
    }
    if templates.is_empty() {
        return Err(Error::Config("at least one anchor template is required".into()));
    }
    for t in templates {
        if !(t.height > 0.0 && t.aspect > 0.0 && t.height.is_finite() && t.aspect.is_finite()) {
            return Err(Error::Config(format!("invalid anchor template {t:?}")));
        }
    }
    let grid_h = image_h / stride;
    let grid_w = image_w / stride;
    let mut boxes = Vec::with_capacity(grid_h * grid_w * templates.len());
    for y in 0..grid_h {
        for x in 0..grid_w {
            let cx = (x as f64 + 0.5) * stride as f64;
            let cy = (y as f64 + 0.5) * stride as f64;
            for t in templates {
                boxes.push(BBox::from_center(cx, cy, t.width(), t.height));
            }
        }
    }
    Ok(AnchorGrid { stride, grid_h, grid_w, templates: templates.to_vec(), boxes })
}

/// Training role of one anchor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AnchorLabel {
    /// Matched to the non-ignore annotation with the highest IoU (> 0.5);
    /// carries the encoded regression target.
    Pos { gt_index: usize, target: [f64; 4] },
    /// Background.
    Neg,
    /// Overlaps an ignore region too strongly to supervise either way.
    Excluded,
}

/// Per-anchor labels for one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorAssignment {
    pub labels: Vec<AnchorLabel>,
}

impl AnchorAssignment {
    /// Indices of positive anchors.
    pub fn positives(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, AnchorLabel::Pos { .. }))
            .map(|(i, _)| i)
            .collect()
    }

    /// Indices of negative anchors.
    pub fn negatives(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, AnchorLabel::Neg))
            .map(|(i, _)| i)
            .collect()
    }
}

/// Assigns a training label to every anchor.
///
/// An anchor is positive when its best IoU over non-ignore annotations
/// exceeds 0.5 (matched to the argmax; ties keep the earliest annotation).
/// A non-positive anchor whose IoU with any ignore annotation exceeds 0.5
/// is excluded. Everything else is negative. Degenerate annotation boxes
/// are rejected.
pub fn assign_anchor_labels(
    grid: &AnchorGrid,
    annotations: &[Annotation],
) -> Result<AnchorAssignment> {
    for ann in annotations {
        ann.bbox.ensure_valid("annotation for anchor assignment")?;
    }
    let mut labels = Vec::with_capacity(grid.len());
    for anchor in &grid.boxes {
        let mut best_iou = 0.0;
        let mut best_gt: Option<usize> = None;
        let mut ignore_overlaps = false;
        for (gi, ann) in annotations.iter().enumerate() {
            let overlap = iou(anchor, &ann.bbox);
            if ann.ignore {
                if overlap > 0.5 {
                    ignore_overlaps = true;
                }
            } else if overlap > best_iou {
                best_iou = overlap;
                best_gt = Some(gi);
            }
        }
        let label = match best_gt {
            Some(gi) if best_iou > 0.5 => AnchorLabel::Pos {
                gt_index: gi,
                target: encode_box(anchor, &annotations[gi].bbox)?,
            },
            _ if ignore_overlaps => AnchorLabel::Excluded,
            _ => AnchorLabel::Neg,
        };
        labels.push(label);
    }
    Ok(AnchorAssignment { labels })
}

/// Encodes a ground-truth box relative to an anchor:
/// `(dx, dy) = (center offset / anchor size)`, `(dw, dh) = ln(size ratio)`.
pub fn encode_box(anchor: &BBox, gt: &BBox) -> Result<[f64; 4]> {
    anchor.ensure_valid("encode_box anchor")?;
    gt.ensure_valid("encode_box ground truth")?;
    Ok([
        (gt.cx() - anchor.cx()) / anchor.w,
        (gt.cy() - anchor.cy()) / anchor.h,
        (gt.w / anchor.w).ln(),
        (gt.h / anchor.h).ln(),
    ])
}

/// Inverse of [`encode_box`]: applies deltas to an anchor.
pub fn decode_box(anchor: &BBox, deltas: &[f64; 4]) -> Result<BBox> {
    anchor.ensure_valid("decode_box anchor")?;
    let cx = anchor.cx() + deltas[0] * anchor.w;
    let cy = anchor.cy() + deltas[1] * anchor.h;
    let w = anchor.w * deltas[2].exp();
    let h = anchor.h * deltas[3].exp();
    let out = BBox::from_center(cx, cy, w, h);
    out.ensure_valid("decoded box")?;
    Ok(out)
}

/// One sampled anchor in a training minibatch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleEntry {
    /// Flat anchor index into the grid.
    pub anchor: usize,
    /// True for positives (classification target 1), false for negatives.
    pub positive: bool,
    /// Regression target, present for positives only.
    pub target: Option<[f64; 4]>,
}

/// The anchors supervised for one frame.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct SampleSet {
    /// Entries in ascending anchor order.
    pub entries: Vec<SampleEntry>,
}

impl SampleSet {
    /// Number of sampled anchors.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// True when nothing was sampled.
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of positive entries.
    pub fn positive_count(&self) -> usize {
        self.entries.iter().filter(|e| e.positive).count()
    }
}

/// Samples `n` anchors for one frame: positives capped at `n / 2` (all of
/// them when fewer exist), the remainder filled with negatives. Excluded
/// anchors are never sampled. When the frame has fewer eligible anchors than
/// `n`, all of them are taken; a frame with no eligible anchors at all is a
/// data error.
pub fn sample_minibatch(
    assignment: &AnchorAssignment,
    n: usize,
    rng: &mut impl Rng,
) -> Result<SampleSet> {
    if n == 0 {
        return Err(Error::Usage("cannot sample an empty minibatch".into()));
    }
    let positives = assignment.positives();
    let negatives = assignment.negatives();
    if positives.is_empty() && negatives.is_empty() {
        return Err(Error::Data("frame has no sampleable anchors (all excluded)".into()));
    }
    let n_pos = positives.len().min(n / 2);
    let n_neg = negatives.len().min(n - n_pos);

    let pick = |pool: &[usize], k: usize, rng: &mut dyn rand::RngCore| -> Vec<usize> {
        if k >= pool.len() {
            pool.to_vec()
        } else {
            rand::seq::index::sample(rng, pool.len(), k)
                .into_iter()
                .map(|i| pool[i])
                .collect()
        }
    };
    let chosen_pos = pick(&positives, n_pos, rng);
    let chosen_neg = pick(&negatives, n_neg, rng);

    let mut entries: Vec<SampleEntry> = chosen_pos
        .into_iter()
        .map(|i| {
            let AnchorLabel::Pos { target, .. } = assignment.labels[i] else {
                unreachable!("positives() only returns positive labels");
            };
            SampleEntry { anchor: i, positive: true, target: Some(target) }
        })
        .chain(chosen_neg.into_iter().map(|i| SampleEntry {
            anchor: i,
            positive: false,
            target: None,
        }))
        .collect();
    entries.sort_by_key(|e| e.anchor);
    Ok(SampleSet { entries })
}
