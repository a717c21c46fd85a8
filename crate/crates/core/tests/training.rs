//! Integration tests for the training module: anchor assignment checked
//! against a from-scratch oracle, and the direction of the gate gradient on
//! a fixture where one head is clearly better than the other.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use iadn_core::dataio::Annotation;
use iadn_core::netgraph::{build_network, register_params, trace, NetworkConfig, Variant};
use iadn_core::numerics::Tape;
use iadn_core::training::losses::detection_loss_on_tape;
use iadn_core::training::{
    assign_anchor_labels, generate_anchors, AnchorLabel, AnchorTemplate, LossNorm, SampleEntry,
    SampleSet,
};
use iadn_core::{BBox, Tensor};

/// Plain-definition IoU, written independently of the library version.
fn iou_ref(a: &BBox, b: &BBox) -> f64 {
    let ix = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let iy = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    inter / (a.w * a.h + b.w * b.h - inter)
}

/// Plain-definition box encoding, written independently of the library
/// version.
fn encode_ref(anchor: &BBox, gt: &BBox) -> [f64; 4] {
    let (acx, acy) = (anchor.x + anchor.w / 2.0, anchor.y + anchor.h / 2.0);
    let (gcx, gcy) = (gt.x + gt.w / 2.0, gt.y + gt.h / 2.0);
    [
        (gcx - acx) / anchor.w,
        (gcy - acy) / anchor.h,
        (gt.w / anchor.w).ln(),
        (gt.h / anchor.h).ln(),
    ]
}

/// All-pairs reference assignment: positive for the best-overlap real box
/// above 0.5, otherwise excluded when any ignore region overlaps above 0.5,
/// otherwise negative.
fn assign_ref(anchors: &[BBox], annotations: &[Annotation]) -> Vec<AnchorLabel> {
    anchors
        .iter()
        .map(|anchor| {
            let mut best: Option<(f64, usize)> = None;
            let mut excluded = false;
            for (gi, ann) in annotations.iter().enumerate() {
                let overlap = iou_ref(anchor, &ann.bbox);
                if ann.ignore {
                    excluded |= overlap > 0.5;
                } else if overlap > 0.5 && best.map_or(true, |(b, _)| overlap > b) {
                    best = Some((overlap, gi));
                }
            }
            match best {
                Some((_, gi)) => AnchorLabel::Pos {
                    gt_index: gi,
                    target: encode_ref(anchor, &annotations[gi].bbox),
                },
                None if excluded => AnchorLabel::Excluded,
                None => AnchorLabel::Neg,
            }
        })
        .collect()
}

#[test]
fn assignment_matches_brute_force_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA551C);
    for _ in 0..1000 {
        let stride = if rng.gen_bool(0.5) { 4 } else { 8 };
        let h = stride * rng.gen_range(2..5usize);
        let w = stride * rng.gen_range(2..5usize);
        let n_templates = rng.gen_range(1..3usize);
        let templates: Vec<AnchorTemplate> = (0..n_templates)
            .map(|_| AnchorTemplate {
                height: rng.gen_range(4.0..20.0),
                aspect: rng.gen_range(0.3..1.2),
            })
            .collect();
        let grid = generate_anchors(h, w, stride, &templates).unwrap();

        let n_ann = rng.gen_range(0..6usize);
        let annotations: Vec<Annotation> = (0..n_ann)
            .map(|_| Annotation {
                bbox: BBox::new(
                    rng.gen_range(-10.0..w as f64),
                    rng.gen_range(-10.0..h as f64),
                    rng.gen_range(2.0..30.0),
                    rng.gen_range(2.0..30.0),
                ),
                ignore: rng.gen_bool(0.3),
                visibility: 1.0,
            })
            .collect();

        let got = assign_anchor_labels(&grid, &annotations).unwrap();
        let want = assign_ref(&grid.boxes, &annotations);
        assert_eq!(got.labels.len(), want.len());
        for (i, (g, w)) in got.labels.iter().zip(&want).enumerate() {
            match (g, w) {
                (
                    AnchorLabel::Pos { gt_index: gi, target: gt },
                    AnchorLabel::Pos { gt_index: wi, target: wt },
                ) => {
                    assert_eq!(gi, wi, "anchor {i}: positive matched a different box");
                    for (a, b) in gt.iter().zip(wt) {
                        assert!((a - b).abs() < 1e-12, "anchor {i}: target {a} vs {b}");
                    }
                }
                (AnchorLabel::Neg, AnchorLabel::Neg)
                | (AnchorLabel::Excluded, AnchorLabel::Excluded) => {}
                other => panic!("anchor {i}: label mismatch {other:?}"),
            }
        }
    }
}

/// Builds an illumination-aware network whose day head scores every anchor
/// at sigmoid(day_bias) and night head at sigmoid(night_bias), with all box
/// deltas exactly zero.
fn head_biased_network(day_bias: f32, night_bias: f32) -> iadn_core::netgraph::Network<f32> {
    let config = NetworkConfig::compact("IATDNN".parse::<Variant>().unwrap());
    let mut net = build_network(&config, 7).unwrap();
    for (name, bias) in [("day", day_bias), ("night", night_bias)] {
        let wkey = format!("head.{name}.cls.weight");
        let bkey = format!("head.{name}.cls.bias");
        let wshape = net.params[&wkey].shape().to_vec();
        let blen = net.params[&bkey].data().len();
        net.params.insert(wkey, Tensor::zeros(wshape));
        net.params
            .insert(bkey, Tensor::from_vec(vec![blen], vec![bias; blen]).unwrap());
        for part in ["weight", "bias"] {
            let key = format!("head.{name}.bbox.{part}");
            let shape = net.params[&key].shape().to_vec();
            net.params.insert(key, Tensor::zeros(shape));
        }
    }
    net
}

/// Gradient of the detection loss with respect to the two gate weights, on
/// an all-positive frame (classification target 1 everywhere, box targets
/// zero).
fn gate_gradient(net: &iadn_core::netgraph::Network<f32>) -> [f64; 2] {
    let config = &net.config;
    let mut tape: Tape<f32> = Tape::new();
    let param_ids = register_params(&mut tape, net).unwrap();
    let vis = tape
        .leaf(Tensor::from_vec(vec![16, 16, 3], vec![0.5f32; 16 * 16 * 3]).unwrap())
        .unwrap();
    let thm = tape
        .leaf(Tensor::from_vec(vec![16, 16, 1], vec![0.3f32; 16 * 16]).unwrap())
        .unwrap();
    let traced = trace(&mut tape, config, &param_ids, vis, thm).unwrap();

    let n_anchors = traced.grid_h * traced.grid_w * config.anchors_per_cell();
    let sample = SampleSet {
        entries: (0..n_anchors)
            .map(|anchor| SampleEntry { anchor, positive: true, target: Some([0.0; 4]) })
            .collect(),
    };
    let loss = detection_loss_on_tape(
        &mut tape,
        traced.cls_prob,
        traced.bbox_delta,
        &sample,
        config.anchors_per_cell(),
        5.0,
        LossNorm::Mean,
    )
    .unwrap();
    let grads = tape.backprop_scalar(loss).unwrap();
    let g = grads.grad(traced.illum_weights.unwrap()).unwrap();
    [f64::from(g.data()[0]), f64::from(g.data()[1])]
}

#[test]
fn gate_gradient_favors_the_better_head() {
    // Day head confident on positives, night head not: pushing gate weight
    // toward day must decrease the detection loss. Because the weights live
    // on the softmax simplex, "increasing w_day" means moving along
    // (+w_day, -w_night); the sign of that directional derivative is what
    // matters. (Both raw partials are negative here: with target 1, more of
    // either head's probability helps. The day head just helps more.)
    let g = gate_gradient(&head_biased_network(2.0, -2.0));
    assert!(g[0] < 0.0, "d loss / d w_day = {} should be negative", g[0]);
    assert!(
        g[0] - g[1] < 0.0,
        "simplex directional derivative {} should favor day",
        g[0] - g[1]
    );

    // Swapping the heads flips the preference.
    let g = gate_gradient(&head_biased_network(-2.0, 2.0));
    assert!(g[1] < 0.0, "d loss / d w_night = {} should be negative", g[1]);
    assert!(
        g[0] - g[1] > 0.0,
        "simplex directional derivative {} should favor night",
        g[0] - g[1]
    );
}
