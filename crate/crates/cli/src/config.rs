//! The training config file: structured key/value text mirroring the
//! network and training parameter structs, merged as
//! defaults < file values < command-line flags.

use std::fs;
use std::path::Path;

use serde::Deserialize;

use iadn_core::netgraph::{BackboneStage, IfcnnConfig, NetworkConfig, Variant};
use iadn_core::training::{AnchorTemplate, LossNorm, TrainConfig};

use crate::CmdError;

/// A `[network]` table; every field optional, defaults come from the
/// desk-scale configuration of the selected variant.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub variant: Option<Variant>,
    pub backbone: Option<Vec<BackboneStage>>,
    pub conv_pro_channels: Option<usize>,
    pub anchors: Option<Vec<AnchorTemplate>>,
    pub ifcnn: Option<IfcnnConfig>,
}

/// A `[train]` table; every field optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub lambda_bb: Option<f64>,
    pub lambda_ia: Option<f64>,
    pub lambda_sm: Option<f64>,
    pub anchors_per_image: Option<usize>,
    pub learning_rate: Option<f64>,
    pub lr_decay: Option<f64>,
    pub lr_decay_every: Option<usize>,
    pub momentum: Option<f64>,
    pub weight_decay: Option<f64>,
    pub clip_norm: Option<f64>,
    pub iterations: Option<usize>,
    pub seed: Option<u64>,
    pub norm: Option<LossNorm>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub train: TrainSection,
}

/// Values supplied as command-line flags; they win over the file.
#[derive(Debug, Default)]
pub struct Overrides {
    pub variant: Option<Variant>,
    pub iterations: Option<usize>,
    pub learning_rate: Option<f64>,
    pub seed: Option<u64>,
}

fn parse_file(path: &Path) -> Result<FileConfig, CmdError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CmdError::Runtime(format!("{}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| CmdError::Runtime(format!("{}: invalid config file: {e}", path.display())))
}

/// Resolves the effective network and training configuration.
pub fn resolve(
    file: Option<&Path>,
    overrides: &Overrides,
) -> Result<(NetworkConfig, TrainConfig), CmdError> {
    let file_cfg = match file {
        Some(path) => parse_file(path)?,
        None => FileConfig::default(),
    };

    let variant = overrides
        .variant
        .or(file_cfg.network.variant)
        .unwrap_or_else(default_variant);
    let mut net = NetworkConfig::desk(variant);
    let section = file_cfg.network;
    if let Some(backbone) = section.backbone {
        net.backbone = backbone;
    }
    if let Some(channels) = section.conv_pro_channels {
        net.conv_pro_channels = channels;
    }
    if let Some(anchors) = section.anchors {
        net.anchors = anchors;
    }
    if let Some(ifcnn) = section.ifcnn {
        net.ifcnn = ifcnn;
    }

    let mut train = TrainConfig::default();
    let section = file_cfg.train;
    macro_rules! take {
        ($($field:ident),*) => {
            $(if let Some(v) = section.$field { train.$field = v; })*
        };
    }
    take!(
        lambda_bb, lambda_ia, lambda_sm, anchors_per_image, learning_rate, lr_decay,
        lr_decay_every, momentum, weight_decay, clip_norm, iterations, seed, norm
    );
    if let Some(iterations) = overrides.iterations {
        train.iterations = iterations;
    }
    if let Some(lr) = overrides.learning_rate {
        train.learning_rate = lr;
    }
    if let Some(seed) = overrides.seed {
        train.seed = seed;
    }

    net.validate().map_err(|e| CmdError::Runtime(format!("invalid network config: {e}")))?;
    train.validate().map_err(|e| CmdError::Runtime(format!("invalid train config: {e}")))?;
    Ok((net, train))
}

/// The full default system: gated heads plus illumination-aware
/// decision-stage segmentation.
pub fn default_variant() -> Variant {
    "IATDNN+IAMSS".parse().expect("the default variant selector parses")
}
