//! Dataset types, the synthetic day/night scene generator, on-disk
//! persistence, and segmentation target rasterization.

mod seg;
mod store;
mod synth;

pub use seg::{rasterize_seg_targets, CellTarget, SegTargets};
pub use store::{load_dataset, save_dataset};
pub use synth::{generate_synthetic_dataset, SynthParams};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::BBox;

/// Scene illumination condition of a frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Illumination {
    Day,
    Night,
}

impl fmt::Display for Illumination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Illumination::Day => "day",
            Illumination::Night => "night",
        })
    }
}

impl FromStr for Illumination {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "day" => Ok(Illumination::Day),
            "night" => Ok(Illumination::Night),
            other => Err(Error::Data(format!(
                "unknown illumination tag {other:?} (expected \"day\" or \"night\")"
            ))),
        }
    }
}

/// One labelled pedestrian (or pedestrian-like region) in a frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Annotation {
    /// Box in pixel coordinates, clipped to the image.
    pub bbox: BBox,
    /// Ignore regions do not count as ground truth during evaluation and do
    /// not provide positive anchors during training.
    pub ignore: bool,
    /// Fraction of the full (unclipped) pedestrian visible in the image,
    /// in [0, 1].
    pub visibility: f64,
}

impl Annotation {
    fn validate(&self) -> Result<()> {
        self.bbox.ensure_valid("annotation")?;
        if !(0.0..=1.0).contains(&self.visibility) || !self.visibility.is_finite() {
            return Err(Error::Data(format!(
                "annotation visibility {} outside [0, 1]",
                self.visibility
            )));
        }
        Ok(())
    }
}

/// A registered visible/thermal image pair with annotations.
///
/// Both images are `[h, w, c]` tensors with values in [0, 1]; the visible
/// image has 3 channels, the thermal image 1, and both share the same
/// spatial size.
#[derive(Clone, Debug, PartialEq)]
pub struct MultispectralFrame {
    /// Stable identifier, unique within a dataset; no whitespace.
    pub id: String,
    pub illumination: Illumination,
    pub visible: Tensor<f32>,
    pub thermal: Tensor<f32>,
    pub annotations: Vec<Annotation>,
}

impl MultispectralFrame {
    /// Image height in pixels.
    pub fn height(&self) -> usize {
        self.visible.shape()[0]
    }

    /// Image width in pixels.
    pub fn width(&self) -> usize {
        self.visible.shape()[1]
    }

    /// Checks the frame invariants: channel counts, matching sizes, value
    /// range, identifier shape, and annotation validity.
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() || self.id.chars().any(|c| c.is_whitespace()) {
            return Err(Error::Data(format!(
                "frame id {:?} must be non-empty and free of whitespace",
                self.id
            )));
        }
        let (vh, vw, vc) = self.visible.dims3()?;
        let (th, tw, tc) = self.thermal.dims3()?;
        if vc != 3 || tc != 1 {
            return Err(Error::Data(format!(
                "frame {}: expected 3 visible and 1 thermal channel, got {} and {}",
                self.id, vc, tc
            )));
        }
        if (vh, vw) != (th, tw) {
            return Err(Error::Data(format!(
                "frame {}: visible size {}x{} does not match thermal size {}x{}",
                self.id, vw, vh, tw, th
            )));
        }
        for t in [&self.visible, &self.thermal] {
            if t.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::Data(format!(
                    "frame {}: image values must lie in [0, 1]",
                    self.id
                )));
            }
        }
        for ann in &self.annotations {
            ann.validate()?;
        }
        Ok(())
    }

    /// Mean luminance of the visible image (mean over all channels).
    pub fn visible_mean_luminance(&self) -> f64 {
        self.visible.mean() as f64
    }
}

/// An ordered collection of frames.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Dataset {
    pub frames: Vec<MultispectralFrame>,
}

impl Dataset {
    /// Number of frames.
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    /// True when the dataset holds no frames.
    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Frames under the given illumination condition.
    pub fn frames_with(&self, illumination: Illumination) -> impl Iterator<Item = &MultispectralFrame> {
        self.frames.iter().filter(move |f| f.illumination == illumination)
    }

    /// Validates every frame and checks id uniqueness.
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for frame in &self.frames {
            frame.validate()?;
            if !seen.insert(frame.id.as_str()) {
                return Err(Error::Data(format!("duplicate frame id {:?}", frame.id)));
            }
        }
        Ok(())
    }
}
