//! Rasterization of annotation boxes onto the feature grid for the
//! segmentation supervision heads.

use crate::dataio::MultispectralFrame;
use crate::error::{Error, Result};

/// Supervision state of one feature-grid cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellTarget {
    /// Cell center lies inside at least one non-ignore annotation.
    Pos,
    /// Cell center lies inside no annotation at all.
    Neg,
    /// Cell center lies only inside ignore annotations; the cell
    /// contributes nothing to the segmentation loss.
    Excluded,
}

/// Per-cell segmentation targets on a `grid_h x grid_w` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SegTargets {
    pub grid_h: usize,
    pub grid_w: usize,
    /// Row-major cells, `grid_h * grid_w` entries.
    pub cells: Vec<CellTarget>,
}

impl SegTargets {
    /// Target of cell `(y, x)`.
    pub fn at(&self, y: usize, x: usize) -> CellTarget {
        self.cells[y * self.grid_w + x]
    }

    /// Number of cells that participate in the loss (not excluded).
    pub fn supervised_count(&self) -> usize {
        self.cells.iter().filter(|c| **c != CellTarget::Excluded).count()
    }
}

/// Rasterizes a frame's annotations to the feature grid.
///
/// Each cell `(y, x)` is probed at its center in image coordinates,
/// `((x + 0.5) * stride, (y + 0.5) * stride)`, against the annotation boxes
/// (half-open on their right and bottom edges). A cell is positive when its
/// center lies in any non-ignore box, excluded when it lies only in ignore
/// boxes, and negative otherwise.
///
/// The grid must agree with the image size: `grid_h * stride == height` and
/// `grid_w * stride == width`.
pub fn rasterize_seg_targets(
    frame: &MultispectralFrame,
    grid_h: usize,
    grid_w: usize,
    stride: usize,
) -> Result<SegTargets> {
    if stride == 0 {
        return Err(Error::Config("stride must be >= 1".into()));
    }
    if grid_h * stride != frame.height() || grid_w * stride != frame.width() {
        return Err(Error::Shape(format!(
            "grid {}x{} with stride {} does not cover image {}x{}",
            grid_w,
            grid_h,
            stride,
            frame.width(),
            frame.height()
        )));
    }
    let mut cells = Vec::with_capacity(grid_h * grid_w);
    for y in 0..grid_h {
        for x in 0..grid_w {
            let cx = (x as f64 + 0.5) * stride as f64;
            let cy = (y as f64 + 0.5) * stride as f64;
            let mut in_real = false;
            let mut in_ignore = false;
            for ann in &frame.annotations {
                if ann.bbox.contains(cx, cy) {
                    if ann.ignore {
                        in_ignore = true;
                    } else {
                        in_real = true;
                    }
                }
            }
            cells.push(match (in_real, in_ignore) {
                (true, _) => CellTarget::Pos,
                (false, true) => CellTarget::Excluded,
                (false, false) => CellTarget::Neg,
            });
        }
    }
    Ok(SegTargets { grid_h, grid_w, cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxes::BBox;
    use crate::dataio::{Annotation, Illumination};
    use crate::numerics::Tensor;

    fn frame_with(annotations: Vec<Annotation>) -> MultispectralFrame {
        MultispectralFrame {
            id: "t".into(),
            illumination: Illumination::Day,
            visible: Tensor::zeros(vec![32, 32, 3]),
            thermal: Tensor::zeros(vec![32, 32, 1]),
            annotations,
        }
    }

    fn ann(x: f64, y: f64, w: f64, h: f64, ignore: bool) -> Annotation {
        Annotation { bbox: BBox::new(x, y, w, h), ignore, visibility: 1.0 }
    }

    #[test]
    fn box_covers_exactly_the_cells_with_interior_centers() {
        // Box spanning [8, 24) in both axes on a stride-8 grid: centers at
        // 4, 12, 20, 28 per axis, so exactly (12, 12), (12, 20), (20, 12),
        // (20, 20) fall inside.
        let frame = frame_with(vec![ann(8.0, 8.0, 16.0, 16.0, false)]);
        let t = rasterize_seg_targets(&frame, 4, 4, 8).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                let expect = if (1..3).contains(&y) && (1..3).contains(&x) {
                    CellTarget::Pos
                } else {
                    CellTarget::Neg
                };
                assert_eq!(t.at(y, x), expect, "cell ({y}, {x})");
            }
        }
    }

    #[test]
    fn half_open_edges_exclude_boundary_centers() {
        // Right/bottom edge at exactly a center coordinate: not inside.
        let frame = frame_with(vec![ann(4.0, 4.0, 8.0, 8.0, false)]);
        let t = rasterize_seg_targets(&frame, 4, 4, 8).unwrap();
        // Center (4, 4) is on the top-left (closed) corner: inside.
        assert_eq!(t.at(0, 0), CellTarget::Pos);
        // Center (12, 12) is on the bottom-right (open) corner: outside.
        assert_eq!(t.at(1, 1), CellTarget::Neg);
    }

    #[test]
    fn ignore_only_cells_are_excluded_but_real_boxes_win() {
        let frame = frame_with(vec![
            ann(8.0, 8.0, 16.0, 16.0, true),
            ann(8.0, 8.0, 8.0, 8.0, false),
        ]);
        let t = rasterize_seg_targets(&frame, 4, 4, 8).unwrap();
        // (12, 12) is inside both: the real box wins.
        assert_eq!(t.at(1, 1), CellTarget::Pos);
        // (20, 20) is inside only the ignore box.
        assert_eq!(t.at(2, 2), CellTarget::Excluded);
        assert_eq!(t.supervised_count(), 13);
    }

    #[test]
    fn grid_must_match_image_and_stride() {
        let frame = frame_with(vec![]);
        assert!(matches!(
            rasterize_seg_targets(&frame, 4, 5, 8),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            rasterize_seg_targets(&frame, 2, 2, 8),
            Err(Error::Shape(_))
        ));
        assert!(rasterize_seg_targets(&frame, 4, 4, 8).is_ok());
        assert!(matches!(
            rasterize_seg_targets(&frame, 4, 4, 0),
            Err(Error::Config(_))
        ));
    }
}
