//! Differentiable forward pass: tracing the two-stream network onto a tape,
//! illumination gating, and the inference entry points.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::netgraph::config::{HeadVariant, NetworkConfig, SegVariant};
use crate::netgraph::network::Network;
use crate::numerics::{LayerSpec, Scalar, Tape, TapeOp, Tensor, ValueId};

/// Softmax day/night weights from the illumination predictor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IlluminationWeights {
    pub day: f64,
    pub night: f64,
}

impl IlluminationWeights {
    /// Hard day/night call; ties go to day.
    pub fn predicts_day(&self) -> bool {
        self.day >= self.night
    }
}

/// Blends two equally-shaped maps with a pair of scalar weights:
/// `out = w[0] * day + w[1] * night`.
pub fn gated_mix<S: Scalar>(day: &Tensor<S>, night: &Tensor<S>, weights: &Tensor<S>) -> Result<Tensor<S>> {
    if day.shape() != night.shape() {
        return Err(Error::Shape(format!(
            "gated_mix branch shapes differ: {:?} vs {:?}",
            day.shape(),
            night.shape()
        )));
    }
    if weights.numel() != 2 {
        return Err(Error::Shape(format!(
            "gated_mix weights must hold 2 values, got shape {:?}",
            weights.shape()
        )));
    }
    let wd = weights.data()[0];
    let wn = weights.data()[1];
    let data = day
        .data()
        .iter()
        .zip(night.data())
        .map(|(&d, &n)| wd * d + wn * n)
        .collect();
    Tensor::from_vec(day.shape().to_vec(), data)
}

/// Tape op for [`gated_mix`]; inputs are `[day, night, weights]`.
#[derive(Debug)]
pub struct GatedMixOp;

impl<S: Scalar> TapeOp<S> for GatedMixOp {
    fn name(&self) -> &str {
        "gated_mix"
    }

    fn forward(&self, inputs: &[&Tensor<S>]) -> Result<Tensor<S>> {
        if inputs.len() != 3 {
            return Err(Error::Usage(format!("gated_mix takes 3 inputs, got {}", inputs.len())));
        }
        gated_mix(inputs[0], inputs[1], inputs[2])
    }

    fn backward(
        &self,
        inputs: &[&Tensor<S>],
        _output: &Tensor<S>,
        grad_out: &Tensor<S>,
    ) -> Result<Vec<Tensor<S>>> {
        let (day, night, weights) = (inputs[0], inputs[1], inputs[2]);
        let wd = weights.data()[0];
        let wn = weights.data()[1];
        let g = grad_out.data();
        let gd: Vec<S> = g.iter().map(|&v| wd * v).collect();
        let gn: Vec<S> = g.iter().map(|&v| wn * v).collect();
        let mut dot_d = S::zero();
        let mut dot_n = S::zero();
        for ((&gv, &dv), &nv) in g.iter().zip(day.data()).zip(night.data()) {
            dot_d += gv * dv;
            dot_n += gv * nv;
        }
        Ok(vec![
            Tensor::from_vec(day.shape().to_vec(), gd)?,
            Tensor::from_vec(night.shape().to_vec(), gn)?,
            Tensor::from_vec(weights.shape().to_vec(), vec![dot_d, dot_n])?,
        ])
    }
}

/// Raw network outputs for one frame, in grid layout.
#[derive(Clone, Debug)]
pub struct RawOutputs<S: Scalar = f32> {
    /// Pedestrian probability per anchor, `[grid_h, grid_w, A]`.
    pub cls_prob: Tensor<S>,
    /// Box regression deltas per anchor, `[grid_h, grid_w, 4A]`.
    pub bbox_delta: Tensor<S>,
    /// Supervised segmentation probability maps by slot name
    /// (`fused`, `vis`, `thm`), each `[grid_h, grid_w, 1]`.
    pub seg_probs: Vec<(String, Tensor<S>)>,
    /// Day/night softmax weights; present only when the variant carries the
    /// illumination predictor.
    pub weights: Option<IlluminationWeights>,
    pub grid_h: usize,
    pub grid_w: usize,
}

/// Tape ids of everything the losses need from a traced forward pass.
#[derive(Clone, Debug)]
pub struct TracedOutputs {
    /// `[grid_h, grid_w, A]`, post-sigmoid (and post-gating when aware).
    pub cls_prob: ValueId,
    /// `[grid_h, grid_w, 4A]` deltas (gated in delta space when aware).
    pub bbox_delta: ValueId,
    /// Supervised segmentation maps by slot name, post-sigmoid/post-gating.
    pub seg_probs: Vec<(String, ValueId)>,
    /// `[2]` day/night softmax weights when the predictor is present.
    pub illum_weights: Option<ValueId>,
    pub grid_h: usize,
    pub grid_w: usize,
}

/// Registers every parameter of `net` as a tape leaf, keyed by name.
pub fn register_params<S: Scalar>(
    tape: &mut Tape<S>,
    net: &Network<S>,
) -> Result<BTreeMap<String, ValueId>> {
    let mut ids = BTreeMap::new();
    for (name, tensor) in &net.params {
        ids.insert(name.clone(), tape.leaf(tensor.clone())?);
    }
    Ok(ids)
}

fn pid(params: &BTreeMap<String, ValueId>, name: &str) -> Result<ValueId> {
    params
        .get(name)
        .copied()
        .ok_or_else(|| Error::Usage(format!("no tape id registered for parameter {name:?}")))
}

fn conv1x1(
    tape: &mut Tape<impl Scalar>,
    params: &BTreeMap<String, ValueId>,
    name: &str,
    out_channels: usize,
    input: ValueId,
) -> Result<ValueId> {
    let spec = LayerSpec::Conv2d { kernel: 1, stride: 1, padding: 0, out_channels };
    let w = pid(params, &format!("{name}.weight"))?;
    let b = pid(params, &format!("{name}.bias"))?;
    tape.apply_layer(&spec, &[input], &[w, b])
}

fn sigmoid(tape: &mut Tape<impl Scalar>, x: ValueId) -> Result<ValueId> {
    tape.apply_layer(&LayerSpec::Sigmoid, &[x], &[])
}

/// One backbone stream: conv + ReLU (+ pool) per stage.
fn run_stream<S: Scalar>(
    tape: &mut Tape<S>,
    config: &NetworkConfig,
    params: &BTreeMap<String, ValueId>,
    prefix: &str,
    input: ValueId,
) -> Result<ValueId> {
    let mut x = input;
    for (i, stage) in config.backbone.iter().enumerate() {
        let spec = LayerSpec::Conv2d {
            kernel: stage.kernel,
            stride: 1,
            padding: stage.kernel / 2,
            out_channels: stage.out_channels,
        };
        let w = pid(params, &format!("{prefix}.stage{i}.conv.weight"))?;
        let b = pid(params, &format!("{prefix}.stage{i}.conv.bias"))?;
        x = tape.apply_layer(&spec, &[x], &[w, b])?;
        x = tape.apply_layer(&LayerSpec::Relu, &[x], &[])?;
        if stage.pool {
            x = tape.apply_layer(&LayerSpec::MaxPool2d { size: 2, stride: 2 }, &[x], &[])?;
        }
    }
    Ok(x)
}

/// The illumination predictor: fused two-stream features resized to the
/// pooled size, then the FC stack with ReLU between layers and a softmax at
/// the end.
fn run_ifcnn<S: Scalar>(
    tape: &mut Tape<S>,
    config: &NetworkConfig,
    params: &BTreeMap<String, ValueId>,
    fused: ValueId,
) -> Result<ValueId> {
    let resize = LayerSpec::BilinearResize {
        out_h: config.ifcnn.pool_h,
        out_w: config.ifcnn.pool_w,
    };
    let mut x = tape.apply_layer(&resize, &[fused], &[])?;
    let n = config.ifcnn.fc_widths.len();
    for (i, &width) in config.ifcnn.fc_widths.iter().enumerate() {
        let spec = LayerSpec::FullyConnected { out_features: width };
        let w = pid(params, &format!("ifcnn.fc{i}.weight"))?;
        let b = pid(params, &format!("ifcnn.fc{i}.bias"))?;
        x = tape.apply_layer(&spec, &[x], &[w, b])?;
        if i + 1 < n {
            x = tape.apply_layer(&LayerSpec::Relu, &[x], &[])?;
        }
    }
    tape.apply_layer(&LayerSpec::Softmax, &[x], &[])
}

/// Blends a day/night pair with the illumination weights on the tape.
fn mix(
    tape: &mut Tape<impl Scalar>,
    day: ValueId,
    night: ValueId,
    weights: ValueId,
) -> Result<ValueId> {
    tape.record(Box::new(GatedMixOp), &[day, night, weights])
}

/// Traces the full forward pass from input ids to output ids.
///
/// `visible` must be `[h, w, 3]` and `thermal` `[h, w, 1]` with identical
/// spatial dims. Gating conventions: classification and segmentation are
/// blended after their sigmoids, box deltas are blended in delta space.
pub fn trace<S: Scalar>(
    tape: &mut Tape<S>,
    config: &NetworkConfig,
    params: &BTreeMap<String, ValueId>,
    visible: ValueId,
    thermal: ValueId,
) -> Result<TracedOutputs> {
    let feat_vis = run_stream(tape, config, params, "vis", visible)?;
    let feat_thm = run_stream(tape, config, params, "thm", thermal)?;
    let fused = tape.apply_layer(&LayerSpec::ConcatChannels, &[feat_vis, feat_thm], &[])?;

    let illum_weights = if config.needs_ifcnn() {
        Some(run_ifcnn(tape, config, params, fused)?)
    } else {
        None
    };

    let pro_spec = LayerSpec::Conv2d {
        kernel: 3,
        stride: 1,
        padding: 1,
        out_channels: config.conv_pro_channels,
    };
    let pro_w = pid(params, "conv_pro.weight")?;
    let pro_b = pid(params, "conv_pro.bias")?;
    let pro = tape.apply_layer(&pro_spec, &[fused], &[pro_w, pro_b])?;
    let pro = tape.apply_layer(&LayerSpec::Relu, &[pro], &[])?;

    let n_anchors = config.anchors_per_cell();
    let (cls_prob, bbox_delta) = match config.variant.head {
        HeadVariant::Tdnn => {
            let logits = conv1x1(tape, params, "head.cls", n_anchors, pro)?;
            let prob = sigmoid(tape, logits)?;
            let delta = conv1x1(tape, params, "head.bbox", 4 * n_anchors, pro)?;
            (prob, delta)
        }
        HeadVariant::Iatdnn => {
            let w = illum_weights.expect("illumination-aware head implies the predictor");
            let day_p = conv1x1(tape, params, "head.day.cls", n_anchors, pro)?;
            let day_p = sigmoid(tape, day_p)?;
            let night_p = conv1x1(tape, params, "head.night.cls", n_anchors, pro)?;
            let night_p = sigmoid(tape, night_p)?;
            let prob = mix(tape, day_p, night_p, w)?;

            let day_d = conv1x1(tape, params, "head.day.bbox", 4 * n_anchors, pro)?;
            let night_d = conv1x1(tape, params, "head.night.bbox", 4 * n_anchors, pro)?;
            let delta = mix(tape, day_d, night_d, w)?;
            (prob, delta)
        }
    };

    let mut seg_probs = Vec::new();
    match config.variant.seg {
        SegVariant::None => {}
        SegVariant::MssF => {
            let logits = conv1x1(tape, params, "seg.fused", 1, fused)?;
            seg_probs.push(("fused".to_string(), sigmoid(tape, logits)?));
        }
        SegVariant::Mss => {
            for (slot, feat) in [("vis", feat_vis), ("thm", feat_thm)] {
                let logits = conv1x1(tape, params, &format!("seg.{slot}"), 1, feat)?;
                seg_probs.push((slot.to_string(), sigmoid(tape, logits)?));
            }
        }
        SegVariant::IamssF => {
            let w = illum_weights.expect("illumination-aware segmentation implies the predictor");
            let day = conv1x1(tape, params, "seg.fused.day", 1, fused)?;
            let day = sigmoid(tape, day)?;
            let night = conv1x1(tape, params, "seg.fused.night", 1, fused)?;
            let night = sigmoid(tape, night)?;
            seg_probs.push(("fused".to_string(), mix(tape, day, night, w)?));
        }
        SegVariant::Iamss => {
            let w = illum_weights.expect("illumination-aware segmentation implies the predictor");
            for (slot, feat) in [("vis", feat_vis), ("thm", feat_thm)] {
                let day = conv1x1(tape, params, &format!("seg.{slot}.day"), 1, feat)?;
                let day = sigmoid(tape, day)?;
                let night = conv1x1(tape, params, &format!("seg.{slot}.night"), 1, feat)?;
                let night = sigmoid(tape, night)?;
                seg_probs.push((slot.to_string(), mix(tape, day, night, w)?));
            }
        }
    }

    let (grid_h, grid_w, _) = tape.value(cls_prob).dims3()?;
    Ok(TracedOutputs { cls_prob, bbox_delta, seg_probs, illum_weights, grid_h, grid_w })
}

impl<S: Scalar> Network<S> {
    /// Runs the forward pass on raw image tensors (`[h, w, 3]` visible,
    /// `[h, w, 1]` thermal) and extracts concrete outputs.
    pub fn forward_tensors(&self, visible: &Tensor<S>, thermal: &Tensor<S>) -> Result<RawOutputs<S>> {
        let (vh, vw, vc) = visible.dims3()?;
        let (th, tw, tc) = thermal.dims3()?;
        if vc != 3 || tc != 1 || vh != th || vw != tw {
            return Err(Error::Shape(format!(
                "expected aligned [h, w, 3] visible and [h, w, 1] thermal inputs, got {:?} and {:?}",
                visible.shape(),
                thermal.shape()
            )));
        }
        let mut tape: Tape<S> = Tape::new();
        let params = register_params(&mut tape, self)?;
        let vis_id = tape.leaf(visible.clone())?;
        let thm_id = tape.leaf(thermal.clone())?;
        let traced = trace(&mut tape, &self.config, &params, vis_id, thm_id)?;

        let weights = traced.illum_weights.map(|id| {
            let w = tape.value(id).data();
            IlluminationWeights { day: w[0].widen(), night: w[1].widen() }
        });
        Ok(RawOutputs {
            cls_prob: tape.value(traced.cls_prob).clone(),
            bbox_delta: tape.value(traced.bbox_delta).clone(),
            seg_probs: traced
                .seg_probs
                .iter()
                .map(|(slot, id)| (slot.clone(), tape.value(*id).clone()))
                .collect(),
            weights,
            grid_h: traced.grid_h,
            grid_w: traced.grid_w,
        })
    }

    /// Runs only the backbone + illumination predictor path, skipping the
    /// detection and segmentation heads; errors for variants without the
    /// predictor.
    pub fn predict_illumination(
        &self,
        visible: &Tensor<S>,
        thermal: &Tensor<S>,
    ) -> Result<IlluminationWeights> {
        if !self.config.needs_ifcnn() {
            return Err(Error::Config(format!(
                "variant {} has no illumination predictor",
                self.config.variant
            )));
        }
        let mut tape: Tape<S> = Tape::new();
        let params = register_params(&mut tape, self)?;
        let vis_id = tape.leaf(visible.clone())?;
        let thm_id = tape.leaf(thermal.clone())?;
        let feat_vis = run_stream(&mut tape, &self.config, &params, "vis", vis_id)?;
        let feat_thm = run_stream(&mut tape, &self.config, &params, "thm", thm_id)?;
        let fused = tape.apply_layer(&LayerSpec::ConcatChannels, &[feat_vis, feat_thm], &[])?;
        let weights = run_ifcnn(&mut tape, &self.config, &params, fused)?;
        let w = tape.value(weights).data();
        Ok(IlluminationWeights { day: w[0].widen(), night: w[1].widen() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::config::Variant;
    use crate::netgraph::network::build_network;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_inputs(h: usize, w: usize, seed: u64) -> (Tensor<f32>, Tensor<f32>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vis = Tensor::from_fn(vec![h, w, 3], |_| rng.gen_range(0.0..1.0));
        let thm = Tensor::from_fn(vec![h, w, 1], |_| rng.gen_range(0.0..1.0));
        (vis, thm)
    }

    fn compact(v: &str) -> Network<f32> {
        let cfg = NetworkConfig::compact(v.parse::<Variant>().unwrap());
        build_network(&cfg, 42).unwrap()
    }

    #[test]
    fn output_shapes_follow_the_grid() {
        let net = compact("IATDNN+IAMSS");
        let (vis, thm) = random_inputs(16, 24, 0);
        let out = net.forward_tensors(&vis, &thm).unwrap();
        assert_eq!((out.grid_h, out.grid_w), (2, 3));
        assert_eq!(out.cls_prob.shape(), [2, 3, 2]);
        assert_eq!(out.bbox_delta.shape(), [2, 3, 8]);
        assert_eq!(out.seg_probs.len(), 2);
        assert_eq!(out.seg_probs[0].0, "vis");
        assert_eq!(out.seg_probs[1].0, "thm");
        for (_, seg) in &out.seg_probs {
            assert_eq!(seg.shape(), [2, 3, 1]);
        }
        let w = out.weights.expect("aware variant exposes weights");
        assert!((w.day + w.night - 1.0).abs() < 1e-6);
    }

    #[test]
    fn plain_variant_has_no_weights_and_single_heads() {
        let net = compact("TDNN");
        let (vis, thm) = random_inputs(16, 16, 1);
        let out = net.forward_tensors(&vis, &thm).unwrap();
        assert!(out.weights.is_none());
        assert!(out.seg_probs.is_empty());
        assert_eq!(out.cls_prob.shape(), [2, 2, 2]);
        assert!(out.cls_prob.data().iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn probabilities_stay_in_unit_interval_after_gating() {
        let net = compact("IATDNN+IAMSS-F");
        let (vis, thm) = random_inputs(16, 16, 2);
        let out = net.forward_tensors(&vis, &thm).unwrap();
        for &p in out.cls_prob.data() {
            assert!((0.0..=1.0).contains(&p), "gated probability {p} out of range");
        }
        for &p in out.seg_probs[0].1.data() {
            assert!((0.0..=1.0).contains(&p), "gated seg probability {p} out of range");
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let net = compact("IATDNN");
        let (vis, thm) = random_inputs(16, 16, 3);
        let a = net.forward_tensors(&vis, &thm).unwrap();
        let b = net.forward_tensors(&vis, &thm).unwrap();
        assert_eq!(a.cls_prob, b.cls_prob);
        assert_eq!(a.bbox_delta, b.bbox_delta);
        assert_eq!(a.weights, b.weights);
    }

    #[test]
    fn predict_illumination_matches_full_forward() {
        let net = compact("IATDNN");
        let (vis, thm) = random_inputs(16, 16, 4);
        let fast = net.predict_illumination(&vis, &thm).unwrap();
        let full = net.forward_tensors(&vis, &thm).unwrap().weights.unwrap();
        assert!((fast.day - full.day).abs() < 1e-12);
        assert!((fast.night - full.night).abs() < 1e-12);

        let plain = compact("TDNN");
        assert!(plain.predict_illumination(&vis, &thm).is_err());
    }

    #[test]
    fn gated_mix_blends_linearly() {
        let day = Tensor::from_vec(vec![2, 2], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        let night = Tensor::from_vec(vec![2, 2], vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        let w = Tensor::from_vec(vec![2], vec![0.25, 0.75]).unwrap();
        let out = gated_mix(&day, &night, &w).unwrap();
        assert_eq!(out.data(), &[4.0, 5.0, 6.0, 7.0]);

        let bad = Tensor::from_vec(vec![3], vec![0.2, 0.3, 0.5]).unwrap();
        assert!(gated_mix(&day, &night, &bad).is_err());
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let net = compact("TDNN");
        let (vis, _) = random_inputs(16, 16, 5);
        let thm_wrong = Tensor::zeros(vec![8, 16, 1]);
        assert!(net.forward_tensors(&vis, &thm_wrong).is_err());
        let vis_wrong = Tensor::zeros(vec![16, 16, 1]);
        let thm = Tensor::zeros(vec![16, 16, 1]);
        assert!(net.forward_tensors(&vis_wrong, &thm).is_err());
    }
}
