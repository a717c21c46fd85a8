//! The two-stream detection network: configuration, parameters, the
//! differentiable forward pass with illumination gating, detection decoding,
//! and checkpoint persistence.

pub mod checkpoint;
pub mod config;
pub mod decode;
pub mod forward;
pub mod network;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{BackboneStage, HeadVariant, IfcnnConfig, NetworkConfig, SegVariant, Variant};
pub use decode::{decode_detections, DetectConfig};
pub use forward::{
    gated_mix, register_params, trace, GatedMixOp, IlluminationWeights, RawOutputs, TracedOutputs,
};
pub use network::{build_network, param_specs, Network, ParamSpec};
