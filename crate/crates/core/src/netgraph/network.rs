//! Parameter registry: which tensors a configuration owns, and their
//! deterministic initialization.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::netgraph::config::{HeadVariant, NetworkConfig, SegVariant};
use crate::numerics::{Scalar, Tensor};

/// Name and shape of one learned tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl ParamSpec {
    fn new(name: impl Into<String>, shape: Vec<usize>) -> Self {
        ParamSpec { name: name.into(), shape }
    }

    /// Biases are zero-initialized; weights draw from a zero-mean Gaussian.
    pub fn is_bias(&self) -> bool {
        self.name.ends_with(".bias")
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    /// Input connections per output unit: `kh*kw*in_c` for convolutions,
    /// `in` for fully connected layers.
    pub fn fan_in(&self) -> usize {
        match self.shape.len() {
            4 => self.shape[0] * self.shape[1] * self.shape[2],
            2 => self.shape[0],
            _ => self.numel().max(1),
        }
    }

    /// Initialization standard deviation. The backbone streams stand in for
    /// a pretrained feature extractor and use fan-in scaling (`sqrt(2/fan)`)
    /// so they produce usable feature magnitudes from the start; every layer
    /// on top of them uses the narrow 0.01 Gaussian.
    pub fn init_std(&self) -> f64 {
        if self.name.starts_with("vis.") || self.name.starts_with("thm.") {
            (2.0 / self.fan_in() as f64).sqrt()
        } else {
            0.01
        }
    }
}

fn push_conv(specs: &mut Vec<ParamSpec>, name: &str, k: usize, in_c: usize, out_c: usize) {
    specs.push(ParamSpec::new(format!("{name}.weight"), vec![k, k, in_c, out_c]));
    specs.push(ParamSpec::new(format!("{name}.bias"), vec![out_c]));
}

fn push_fc(specs: &mut Vec<ParamSpec>, name: &str, in_f: usize, out_f: usize) {
    specs.push(ParamSpec::new(format!("{name}.weight"), vec![in_f, out_f]));
    specs.push(ParamSpec::new(format!("{name}.bias"), vec![out_f]));
}

/// Every parameter a network with this configuration owns, in a fixed
/// emission order. Initialization consumes randomness in exactly this order,
/// so the order is part of the determinism contract.
///
/// Naming scheme (all convolution weights are `[kh, kw, in_c, out_c]`,
/// fully-connected weights `[in, out]`):
///
/// * `vis.stage{i}.conv.*`, `thm.stage{i}.conv.*` — backbone stages,
///   visible stream first.
/// * `ifcnn.fc{i}.*` — the illumination predictor, present only for
///   illumination-aware variants.
/// * `conv_pro.*` — the shared 3x3 head convolution on the fused map.
/// * `head.cls.*` / `head.bbox.*` — detection heads; the illumination-aware
///   head has `head.day.cls.*`, `head.day.bbox.*`, `head.night.cls.*`,
///   `head.night.bbox.*` instead.
/// * `seg.fused.*`, `seg.vis.*` / `seg.thm.*` — segmentation heads, with a
///   `.day` / `.night` pair per slot for the illumination-aware flavors.
pub fn param_specs(config: &NetworkConfig) -> Vec<ParamSpec> {
    let mut specs = Vec::new();

    for (stream, mut in_c) in [("vis", 3usize), ("thm", 1usize)] {
        for (i, stage) in config.backbone.iter().enumerate() {
            push_conv(&mut specs, &format!("{stream}.stage{i}.conv"), stage.kernel, in_c, stage.out_channels);
            in_c = stage.out_channels;
        }
    }

    if config.needs_ifcnn() {
        // The predictor reads the fused two-stream feature map, pooled to a
        // fixed spatial size.
        let mut in_f = config.ifcnn.pool_h * config.ifcnn.pool_w * config.fused_channels();
        for (i, &w) in config.ifcnn.fc_widths.iter().enumerate() {
            push_fc(&mut specs, &format!("ifcnn.fc{i}"), in_f, w);
            in_f = w;
        }
    }

    let fused_c = config.fused_channels();
    let pro_c = config.conv_pro_channels;
    push_conv(&mut specs, "conv_pro", 3, fused_c, pro_c);

    let n_anchors = config.anchors_per_cell();
    match config.variant.head {
        HeadVariant::Tdnn => {
            push_conv(&mut specs, "head.cls", 1, pro_c, n_anchors);
            push_conv(&mut specs, "head.bbox", 1, pro_c, 4 * n_anchors);
        }
        HeadVariant::Iatdnn => {
            for side in ["day", "night"] {
                push_conv(&mut specs, &format!("head.{side}.cls"), 1, pro_c, n_anchors);
                push_conv(&mut specs, &format!("head.{side}.bbox"), 1, pro_c, 4 * n_anchors);
            }
        }
    }

    let stream_c = config.backbone.last().map_or(0, |s| s.out_channels);
    match config.variant.seg {
        SegVariant::None => {}
        SegVariant::MssF => push_conv(&mut specs, "seg.fused", 1, fused_c, 1),
        SegVariant::Mss => {
            push_conv(&mut specs, "seg.vis", 1, stream_c, 1);
            push_conv(&mut specs, "seg.thm", 1, stream_c, 1);
        }
        SegVariant::IamssF => {
            for side in ["day", "night"] {
                push_conv(&mut specs, &format!("seg.fused.{side}"), 1, fused_c, 1);
            }
        }
        SegVariant::Iamss => {
            for stream in ["vis", "thm"] {
                for side in ["day", "night"] {
                    push_conv(&mut specs, &format!("seg.{stream}.{side}"), 1, stream_c, 1);
                }
            }
        }
    }

    specs
}

/// A configuration plus its learned parameters.
#[derive(Clone, Debug)]
pub struct Network<S: Scalar = f32> {
    pub config: NetworkConfig,
    /// Parameters by name; the sorted map order is the canonical order for
    /// serialization and gradient bookkeeping.
    pub params: BTreeMap<String, Tensor<S>>,
}

impl<S: Scalar> Network<S> {
    /// Total number of learned scalars.
    pub fn param_count(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    /// Checks that the parameter set matches the configuration exactly:
    /// every expected tensor present with the right shape, and nothing else.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let specs = param_specs(&self.config);
        for spec in &specs {
            match self.params.get(&spec.name) {
                None => {
                    return Err(Error::Config(format!("missing parameter {:?}", spec.name)));
                }
                Some(t) if t.shape() != spec.shape.as_slice() => {
                    return Err(Error::Shape(format!(
                        "parameter {:?} has shape {:?}, expected {:?}",
                        spec.name,
                        t.shape(),
                        spec.shape
                    )));
                }
                Some(t) => t.ensure_finite(&spec.name)?,
            }
        }
        if self.params.len() != specs.len() {
            let expected: std::collections::BTreeSet<_> =
                specs.iter().map(|s| s.name.as_str()).collect();
            let extra: Vec<_> =
                self.params.keys().filter(|k| !expected.contains(k.as_str())).collect();
            return Err(Error::Config(format!("unexpected parameters {extra:?}")));
        }
        Ok(())
    }

    /// Converts every parameter to another precision.
    pub fn to_precision<T: Scalar>(&self) -> Network<T> {
        Network {
            config: self.config.clone(),
            params: self.params.iter().map(|(k, v)| (k.clone(), v.to_precision())).collect(),
        }
    }
}

/// Builds a network with freshly initialized parameters: zero-mean Gaussian
/// weights with the per-layer standard deviation from
/// [`ParamSpec::init_std`] (fan-in scaled for the backbone streams, 0.01 for
/// every layer above them), biases zero. The draw order follows
/// [`param_specs`], so a (config, seed) pair fully determines every value.
pub fn build_network(config: &NetworkConfig, seed: u64) -> Result<Network<f32>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = BTreeMap::new();
    for spec in param_specs(config) {
        let tensor = if spec.is_bias() {
            Tensor::zeros(spec.shape.clone())
        } else {
            let normal = Normal::new(0.0f64, spec.init_std()).expect("stddev is positive");
            let data: Vec<f32> = (0..spec.numel()).map(|_| normal.sample(&mut rng) as f32).collect();
            Tensor::from_vec(spec.shape.clone(), data)?
        };
        params.insert(spec.name, tensor);
    }
    let net = Network { config: config.clone(), params };
    net.validate()?;
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::config::Variant;

    fn desk(v: &str) -> NetworkConfig {
        NetworkConfig::desk(v.parse::<Variant>().unwrap())
    }

    /// Closed-form parameter count for the plain desk TDNN:
    /// backbone vis (3->16->32->64) + thm (1->16->32->64) with 3x3 kernels,
    /// conv_pro 3x3 128->64, heads 1x1 64->4 and 64->16.
    #[test]
    fn tdnn_param_count_matches_closed_form() {
        let net = build_network(&desk("TDNN"), 0).unwrap();
        let backbone_vis = (9 * 3 * 16 + 16) + (9 * 16 * 32 + 32) + (9 * 32 * 64 + 64);
        let backbone_thm = (9 * 1 * 16 + 16) + (9 * 16 * 32 + 32) + (9 * 32 * 64 + 64);
        let conv_pro = 9 * 128 * 64 + 64;
        let heads = (64 * 4 + 4) + (64 * 16 + 16);
        assert_eq!(net.param_count(), backbone_vis + backbone_thm + conv_pro + heads);
    }

    #[test]
    fn iatdnn_adds_ifcnn_and_doubled_heads() {
        let plain = build_network(&desk("TDNN"), 0).unwrap();
        let ia = build_network(&desk("IATDNN"), 0).unwrap();
        let ifcnn = (7 * 7 * 128 * 512 + 512) + (512 * 64 + 64) + (64 * 2 + 2);
        let extra_heads = (64 * 4 + 4) + (64 * 16 + 16);
        assert_eq!(ia.param_count(), plain.param_count() + ifcnn + extra_heads);
        assert!(ia.params.contains_key("ifcnn.fc0.weight"));
        assert!(ia.params.contains_key("head.day.cls.weight"));
        assert!(ia.params.contains_key("head.night.bbox.bias"));
        assert!(!ia.params.contains_key("head.cls.weight"));
    }

    #[test]
    fn seg_variants_add_the_right_heads() {
        let count = |v: &str| build_network(&desk(v), 0).unwrap().param_count();
        let base = count("IATDNN");
        assert_eq!(count("IATDNN+MSS-F"), base + (128 + 1));
        assert_eq!(count("IATDNN+MSS"), base + 2 * (64 + 1));
        assert_eq!(count("IATDNN+IAMSS-F"), base + 2 * (128 + 1));
        assert_eq!(count("IATDNN+IAMSS"), base + 4 * (64 + 1));
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let cfg = desk("IATDNN+IAMSS");
        let a = build_network(&cfg, 7).unwrap();
        let b = build_network(&cfg, 7).unwrap();
        let c = build_network(&cfg, 8).unwrap();
        for (k, t) in &a.params {
            assert_eq!(t, &b.params[k], "{k} differs between identical seeds");
        }
        assert!(
            a.params["conv_pro.weight"] != c.params["conv_pro.weight"],
            "different seeds should give different weights"
        );
    }

    #[test]
    fn biases_start_at_zero_and_weights_follow_the_init_scale() {
        let net = build_network(&desk("IATDNN"), 3).unwrap();
        for (name, t) in &net.params {
            if name.ends_with(".bias") {
                assert!(t.data().iter().all(|&v| v == 0.0), "{name} not zero");
                continue;
            }
            let n = t.numel() as f64;
            let std = (t.data().iter().map(|&v| f64::from(v).powi(2)).sum::<f64>() / n).sqrt();
            let backbone = name.starts_with("vis.") || name.starts_with("thm.");
            if backbone {
                // Fan-in scaled: std should sit near sqrt(2/fan), well above
                // the narrow head init.
                assert!(std > 0.02, "{name} backbone init too small: {std}");
            } else {
                assert!((std - 0.01).abs() < 0.005, "{name} init std {std} not near 0.01");
            }
        }
    }

    #[test]
    fn validate_catches_missing_and_misshapen_params() {
        let mut net = build_network(&desk("TDNN"), 0).unwrap();
        net.params.remove("head.cls.bias");
        assert!(net.validate().is_err());

        let mut net = build_network(&desk("TDNN"), 0).unwrap();
        net.params.insert("head.cls.bias".into(), Tensor::zeros(vec![5]));
        assert!(net.validate().is_err());

        let mut net = build_network(&desk("TDNN"), 0).unwrap();
        net.params.insert("stray.weight".into(), Tensor::zeros(vec![1]));
        assert!(net.validate().is_err());
    }

    #[test]
    fn precision_conversion_round_trips_f32_values() {
        let net = build_network(&desk("TDNN"), 1).unwrap();
        let wide: Network<f64> = net.to_precision();
        let back: Network<f32> = wide.to_precision();
        for (k, t) in &net.params {
            assert_eq!(t, &back.params[k], "{k} changed across f32 -> f64 -> f32");
        }
    }
}
