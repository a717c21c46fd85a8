//! End-to-end gradient verification: traces the full network and total
//! training loss at 64-bit precision and compares every parameter gradient
//! against central finite differences.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataio::{rasterize_seg_targets, Annotation, Illumination, MultispectralFrame, SegTargets};
use crate::error::Result;
use crate::netgraph::config::{NetworkConfig, SegVariant};
use crate::netgraph::forward::trace;
use crate::netgraph::network::{build_network, param_specs};
use crate::numerics::{grad_check, GradCheckOptions, GradCheckReport, Tensor};
use crate::training::anchors::{SampleEntry, SampleSet};
use crate::training::losses::{assemble_loss, LossNorm};
use crate::BBox;

/// Builds a fixture frame just large enough to exercise every loss path:
/// one real pedestrian, one ignore region, random imagery.
fn fixture_frame(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Result<MultispectralFrame> {
    let mut fill = |c: usize| -> Result<Tensor<f32>> {
        let data: Vec<f32> = (0..h * w * c).map(|_| rng.gen::<f32>()).collect();
        Tensor::from_vec(vec![h, w, c], data)
    };
    Ok(MultispectralFrame {
        id: "gradcheck".to_string(),
        illumination: Illumination::Day,
        visible: fill(3)?,
        thermal: fill(1)?,
        annotations: vec![
            Annotation {
                bbox: BBox::new(3.0, 2.0, 5.0, 11.0),
                ignore: false,
                visibility: 1.0,
            },
            Annotation {
                bbox: BBox::new(10.0, 9.0, 4.0, 6.0),
                ignore: true,
                visibility: 1.0,
            },
        ],
    })
}

/// A small supervised sample touching both classification branches and the
/// box regression term. Anchor indices stay within a 2x2 grid with
/// `anchors_per_cell` templates.
fn fixture_sample(anchors_per_cell: usize) -> SampleSet {
    let n = 4 * anchors_per_cell;
    SampleSet {
        entries: vec![
            SampleEntry {
                anchor: 0,
                positive: true,
                target: Some([0.12, -0.08, 0.25, -0.15]),
            },
            SampleEntry { anchor: 1, positive: false, target: None },
            SampleEntry {
                anchor: n / 2,
                positive: true,
                target: Some([-0.2, 0.1, -0.3, 0.05]),
            },
            SampleEntry { anchor: n - 1, positive: false, target: None },
        ],
    }
}

/// Checks the gradients of the total loss for one network configuration.
///
/// Builds the network at `seed`, widens it to `f64`, traces the complete
/// forward graph (both streams, the illumination predictor and gating when
/// present, every segmentation head of the variant) into the total loss on
/// a 16x16 fixture frame, and runs the finite-difference checker over all
/// parameters plus both input images.
pub fn check_loss_gradients(
    config: &NetworkConfig,
    seed: u64,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    config.validate()?;
    let net = build_network(config, seed)?.to_precision::<f64>();
    let specs = param_specs(config);

    let (h, w) = (16, 16);
    let stride = config.stride();
    let (grid_h, grid_w) = (h / stride, w / stride);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5EED));
    let frame = fixture_frame(&mut rng, h, w)?;
    let seg: Option<SegTargets> = if config.variant.seg == SegVariant::None {
        None
    } else {
        Some(rasterize_seg_targets(&frame, grid_h, grid_w, stride)?)
    };
    let sample = fixture_sample(config.anchors_per_cell());
    let label = frame.illumination;

    // Evaluation point: every parameter in specification order, then the
    // two input images.
    let mut point: Vec<Tensor<f64>> = Vec::with_capacity(specs.len() + 2);
    let mut names: Vec<String> = Vec::with_capacity(specs.len());
    for spec in &specs {
        point.push(net.params[&spec.name].clone());
        names.push(spec.name.clone());
    }
    point.push(frame.visible.to_precision::<f64>());
    point.push(frame.thermal.to_precision::<f64>());

    let config = config.clone();
    grad_check(
        move |tape, ids| {
            let params: BTreeMap<String, _> =
                names.iter().cloned().zip(ids.iter().copied()).collect();
            let visible = ids[ids.len() - 2];
            let thermal = ids[ids.len() - 1];
            let traced = trace(tape, &config, &params, visible, thermal)?;
            let losses = assemble_loss(
                tape,
                &traced,
                &sample,
                config.anchors_per_cell(),
                seg.as_ref(),
                label,
                5.0,
                1.0,
                1.0,
                LossNorm::Mean,
            )?;
            Ok(losses.total)
        },
        &point,
        opts,
    )
}
