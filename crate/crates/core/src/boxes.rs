//! Axis-aligned boxes in image coordinates, shared across anchors,
//! annotations, and detections.

use crate::error::{Error, Result};

/// An axis-aligned box: top-left corner plus width and height, in pixels.
///
/// The x axis grows rightward and the y axis downward. Valid boxes have
/// strictly positive width and height and finite coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    /// Builds a box from its top-left corner and size.
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        BBox { x, y, w, h }
    }

    /// Builds a box from its center and size.
    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        BBox { x: cx - w / 2.0, y: cy - h / 2.0, w, h }
    }

    /// Center x coordinate.
    pub fn cx(&self) -> f64 {
        self.x + self.w / 2.0
    }

    /// Center y coordinate.
    pub fn cy(&self) -> f64 {
        self.y + self.h / 2.0
    }

    /// Right edge (exclusive).
    pub fn x2(&self) -> f64 {
        self.x + self.w
    }

    /// Bottom edge (exclusive).
    pub fn y2(&self) -> f64 {
        self.y + self.h
    }

    /// Box area.
    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Area of the overlap with `other`; zero when disjoint.
    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let ix = (self.x2().min(other.x2()) - self.x.max(other.x)).max(0.0);
        let iy = (self.y2().min(other.y2()) - self.y.max(other.y)).max(0.0);
        ix * iy
    }

    /// True when the point lies inside the box, edges half-open: the top and
    /// left edges are inside, the bottom and right edges are not.
    pub fn contains(&self, px: f64, py: f64) -> bool {
        px >= self.x && px < self.x2() && py >= self.y && py < self.y2()
    }

    /// True for finite boxes with positive extent.
    pub fn is_valid(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.w.is_finite()
            && self.h.is_finite()
            && self.w > 0.0
            && self.h > 0.0
    }

    /// Validates the box, naming `context` in the error.
    pub fn ensure_valid(&self, context: &str) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::Numeric(format!(
                "invalid box in {}: x={} y={} w={} h={}",
                context, self.x, self.y, self.w, self.h
            )))
        }
    }

    /// The part of the box inside an image of the given size; `None` when
    /// nothing remains.
    pub fn clipped_to(&self, width: f64, height: f64) -> Option<BBox> {
        let x1 = self.x.max(0.0);
        let y1 = self.y.max(0.0);
        let x2 = self.x2().min(width);
        let y2 = self.y2().min(height);
        if x2 > x1 && y2 > y1 {
            Some(BBox { x: x1, y: y1, w: x2 - x1, h: y2 - y1 })
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn center_round_trip() {
        let b = BBox::from_center(10.0, 20.0, 4.0, 8.0);
        assert_eq!(b.x, 8.0);
        assert_eq!(b.y, 16.0);
        assert_eq!(b.cx(), 10.0);
        assert_eq!(b.cy(), 20.0);
    }

    #[test]
    fn intersection_of_disjoint_boxes_is_zero() {
        let a = BBox::new(0.0, 0.0, 2.0, 2.0);
        let b = BBox::new(5.0, 5.0, 2.0, 2.0);
        assert_eq!(a.intersection_area(&b), 0.0);
    }

    #[test]
    fn containment_is_half_open() {
        let b = BBox::new(1.0, 1.0, 2.0, 2.0);
        assert!(b.contains(1.0, 1.0));
        assert!(b.contains(2.9, 2.9));
        assert!(!b.contains(3.0, 1.5));
        assert!(!b.contains(1.5, 3.0));
    }

    #[test]
    fn validity_rejects_degenerate_and_non_finite() {
        assert!(BBox::new(0.0, 0.0, 1.0, 1.0).is_valid());
        assert!(!BBox::new(0.0, 0.0, 0.0, 1.0).is_valid());
        assert!(!BBox::new(0.0, 0.0, -1.0, 1.0).is_valid());
        assert!(!BBox::new(f64::NAN, 0.0, 1.0, 1.0).is_valid());
        assert!(BBox::new(0.0, 0.0, f64::INFINITY, 1.0).ensure_valid("test").is_err());
    }

    #[test]
    fn clipping_to_image_bounds() {
        let b = BBox::new(-2.0, 3.0, 6.0, 10.0);
        let c = b.clipped_to(8.0, 8.0).unwrap();
        assert_eq!((c.x, c.y, c.w, c.h), (0.0, 3.0, 4.0, 5.0));
        assert!(BBox::new(10.0, 10.0, 2.0, 2.0).clipped_to(8.0, 8.0).is_none());
    }
}
