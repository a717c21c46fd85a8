//! Network topology configuration and the named architecture variants.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::training::anchors::{default_templates, AnchorTemplate};

/// Detection head family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HeadVariant {
    /// Single classification/regression head on the fused features.
    Tdnn,
    /// Day and night head pairs blended by the illumination weights.
    Iatdnn,
}

/// Segmentation supervision variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SegVariant {
    /// No segmentation supervision.
    None,
    /// One head on the fused two-stream features.
    MssF,
    /// One head per stream (visible and thermal), supervised separately.
    Mss,
    /// Day/night head pair on the fused features, illumination-blended.
    IamssF,
    /// Day/night head pairs per stream, illumination-blended.
    Iamss,
}

impl SegVariant {
    /// Number of supervised segmentation streams.
    pub fn stream_count(&self) -> usize {
        match self {
            SegVariant::None => 0,
            SegVariant::MssF | SegVariant::IamssF => 1,
            SegVariant::Mss | SegVariant::Iamss => 2,
        }
    }

    /// True when the variant blends day/night subnets.
    pub fn is_illumination_aware(&self) -> bool {
        matches!(self, SegVariant::IamssF | SegVariant::Iamss)
    }
}

/// A full architecture variant: head plus segmentation flavor.
///
/// Rendered as `TDNN`, `IATDNN`, `IATDNN+MSS-F`, `IATDNN+MSS`,
/// `IATDNN+IAMSS-F`, `IATDNN+IAMSS`, and so on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Variant {
    pub head: HeadVariant,
    pub seg: SegVariant,
}

impl Variant {
    pub fn new(head: HeadVariant, seg: SegVariant) -> Self {
        Variant { head, seg }
    }

    /// All ten head/segmentation combinations.
    pub fn all() -> Vec<Variant> {
        let mut out = Vec::new();
        for head in [HeadVariant::Tdnn, HeadVariant::Iatdnn] {
            for seg in [
                SegVariant::None,
                SegVariant::MssF,
                SegVariant::Mss,
                SegVariant::IamssF,
                SegVariant::Iamss,
            ] {
                out.push(Variant { head, seg });
            }
        }
        out
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let head = match self.head {
            HeadVariant::Tdnn => "TDNN",
            HeadVariant::Iatdnn => "IATDNN",
        };
        let seg = match self.seg {
            SegVariant::None => "",
            SegVariant::MssF => "+MSS-F",
            SegVariant::Mss => "+MSS",
            SegVariant::IamssF => "+IAMSS-F",
            SegVariant::Iamss => "+IAMSS",
        };
        write!(f, "{head}{seg}")
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head_str, seg_str) = match s.split_once('+') {
            Some((h, seg)) => (h, Some(seg)),
            None => (s, None),
        };
        let head = match head_str {
            "TDNN" => HeadVariant::Tdnn,
            "IATDNN" => HeadVariant::Iatdnn,
            other => {
                return Err(Error::Config(format!(
                    "unknown head variant {other:?} (expected TDNN or IATDNN)"
                )))
            }
        };
        let seg = match seg_str {
            None => SegVariant::None,
            Some("MSS-F") => SegVariant::MssF,
            Some("MSS") => SegVariant::Mss,
            Some("IAMSS-F") => SegVariant::IamssF,
            Some("IAMSS") => SegVariant::Iamss,
            Some(other) => {
                return Err(Error::Config(format!(
                    "unknown segmentation variant {other:?} (expected MSS-F, MSS, IAMSS-F, or IAMSS)"
                )))
            }
        };
        Ok(Variant { head, seg })
    }
}

impl Serialize for Variant {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Variant {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One backbone stage: same-size convolution, ReLU, optional 2x2 max pool.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackboneStage {
    /// Convolution kernel size; must be odd so padding keeps the size.
    pub kernel: usize,
    pub out_channels: usize,
    /// Whether the stage ends with a stride-2 max pool.
    pub pool: bool,
}

/// Illumination predictor shape: pooled input size and FC widths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IfcnnConfig {
    pub pool_h: usize,
    pub pool_w: usize,
    /// Fully-connected widths; the last must be 2 (day/night logits).
    pub fc_widths: Vec<usize>,
}

/// Complete topology of a detection network.
///
/// Both streams share the same stage structure (with independent weights),
/// so their feature maps align for concatenation; the total stride is 2 to
/// the power of the number of pooled stages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub variant: Variant,
    pub backbone: Vec<BackboneStage>,
    /// Channels of the shared 3x3 convolution feeding the heads.
    pub conv_pro_channels: usize,
    pub anchors: Vec<AnchorTemplate>,
    pub ifcnn: IfcnnConfig,
}

impl NetworkConfig {
    /// The default desk-scale configuration for a variant: three stages of
    /// 16/32/64 channels (stride 8), a 64-channel head convolution, the
    /// standard pedestrian anchors, and a 7x7-pooled [512, 64, 2]
    /// illumination predictor.
    pub fn desk(variant: Variant) -> Self {
        NetworkConfig {
            variant,
            backbone: vec![
                BackboneStage { kernel: 3, out_channels: 16, pool: true },
                BackboneStage { kernel: 3, out_channels: 32, pool: true },
                BackboneStage { kernel: 3, out_channels: 64, pool: true },
            ],
            conv_pro_channels: 64,
            anchors: default_templates(),
            ifcnn: IfcnnConfig { pool_h: 7, pool_w: 7, fc_widths: vec![512, 64, 2] },
        }
    }

    /// A deliberately small configuration for gradient verification and
    /// quick tests: narrow channels, a 3x3 illumination pool, and two small
    /// anchor templates. Still stride 8, so 16x16 inputs give a 2x2 grid.
    pub fn compact(variant: Variant) -> Self {
        NetworkConfig {
            variant,
            backbone: vec![
                BackboneStage { kernel: 3, out_channels: 4, pool: true },
                BackboneStage { kernel: 3, out_channels: 6, pool: true },
                BackboneStage { kernel: 3, out_channels: 8, pool: true },
            ],
            conv_pro_channels: 8,
            anchors: vec![
                AnchorTemplate { height: 8.0, aspect: 0.41 },
                AnchorTemplate { height: 12.0, aspect: 0.41 },
            ],
            ifcnn: IfcnnConfig { pool_h: 3, pool_w: 3, fc_widths: vec![24, 12, 2] },
        }
    }

    /// Total spatial stride of the backbone: 2 per pooled stage.
    pub fn stride(&self) -> usize {
        1 << self.backbone.iter().filter(|s| s.pool).count()
    }

    /// Channel count of the concatenated two-stream feature map.
    pub fn fused_channels(&self) -> usize {
        2 * self.backbone.last().map_or(0, |s| s.out_channels)
    }

    /// True when the variant needs the illumination predictor (an
    /// illumination-aware head or segmentation flavor).
    pub fn needs_ifcnn(&self) -> bool {
        self.variant.head == HeadVariant::Iatdnn || self.variant.seg.is_illumination_aware()
    }

    /// Anchors per cell.
    pub fn anchors_per_cell(&self) -> usize {
        self.anchors.len()
    }

    /// Checks all topology invariants.
    pub fn validate(&self) -> Result<()> {
        if self.backbone.is_empty() {
            return Err(Error::Config("backbone must have at least one stage".into()));
        }
        for (i, stage) in self.backbone.iter().enumerate() {
            if stage.kernel == 0 || stage.kernel % 2 == 0 {
                return Err(Error::Config(format!(
                    "backbone stage {i}: kernel {} must be odd so convolutions preserve size",
                    stage.kernel
                )));
            }
            if stage.out_channels == 0 {
                return Err(Error::Config(format!("backbone stage {i}: out_channels must be >= 1")));
            }
        }
        if self.conv_pro_channels == 0 {
            return Err(Error::Config("conv_pro_channels must be >= 1".into()));
        }
        if self.anchors.is_empty() {
            return Err(Error::Config("at least one anchor template is required".into()));
        }
        for t in &self.anchors {
            if !(t.height > 0.0 && t.aspect > 0.0 && t.height.is_finite() && t.aspect.is_finite()) {
                return Err(Error::Config(format!("invalid anchor template {t:?}")));
            }
        }
        if self.ifcnn.pool_h == 0 || self.ifcnn.pool_w == 0 {
            return Err(Error::Config("IFCNN pool size must be >= 1".into()));
        }
        match self.ifcnn.fc_widths.as_slice() {
            [] => return Err(Error::Config("IFCNN needs at least one FC layer".into())),
            widths => {
                if widths.iter().any(|&w| w == 0) {
                    return Err(Error::Config("IFCNN FC widths must be >= 1".into()));
                }
                if *widths.last().unwrap() != 2 {
                    return Err(Error::Config(format!(
                        "the last IFCNN width must be 2 (day/night logits), got {}",
                        widths.last().unwrap()
                    )));
                }
            }
        }
        Ok(())
    }
}
