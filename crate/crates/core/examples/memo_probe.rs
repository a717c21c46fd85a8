//! Scratch probe: single-frame memorization across learning rates. The
//! target is the cls component of the detection loss after 300 iterations.

use iadn_core::dataio::{generate_synthetic_dataset, Dataset, SynthParams};
use iadn_core::netgraph::{build_network, NetworkConfig, Variant};
use iadn_core::training::{
    assign_anchor_labels, default_templates, generate_anchors, train, AnchorLabel, TrainConfig,
};

fn main() {
    let params = SynthParams { n_frames: 8, ..SynthParams::default() };
    let full = generate_synthetic_dataset(&params, 5).unwrap();
    let frame = full
        .frames
        .iter()
        .find(|f| f.annotations.iter().any(|a| !a.ignore))
        .unwrap()
        .clone();
    println!(
        "frame: {} annotations ({} ignore)",
        frame.annotations.len(),
        frame.annotations.iter().filter(|a| a.ignore).count()
    );
    let grid = generate_anchors(frame.height(), frame.width(), 8, &default_templates()).unwrap();
    let assignment = assign_anchor_labels(&grid, &frame.annotations).unwrap();
    let n_pos = assignment
        .labels
        .iter()
        .filter(|l| matches!(l, AnchorLabel::Pos { .. }))
        .count();
    let n_exc = assignment
        .labels
        .iter()
        .filter(|l| matches!(l, AnchorLabel::Excluded))
        .count();
    println!("anchors: {} total, {} positive, {} excluded", grid.len(), n_pos, n_exc);

    let single = Dataset { frames: vec![frame.clone()] };
    let config = NetworkConfig::desk("TDNN".parse::<Variant>().unwrap());
    for lr in [0.03, 0.3] {
        let net = build_network(&config, 0).unwrap();
        let tc = TrainConfig { iterations: 300, learning_rate: lr, ..TrainConfig::default() };
        let (net, hist) = train(&single, net, &tc).unwrap();
        let last = hist.last().unwrap();

        let raw = net.forward_tensors(&frame.visible, &frame.thermal).unwrap();
        let probs = raw.cls_prob.data();
        let mut pos_p = Vec::new();
        let mut neg_p = Vec::new();
        for (i, label) in assignment.labels.iter().enumerate() {
            match label {
                AnchorLabel::Pos { .. } => pos_p.push(f64::from(probs[i])),
                AnchorLabel::Neg => neg_p.push(f64::from(probs[i])),
                AnchorLabel::Excluded => {}
            }
        }
        let stats = |v: &[f64]| {
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let mut s = v.to_vec();
            s.sort_by(f64::total_cmp);
            (s[0], mean, s[s.len() - 1])
        };
        println!(
            "lr {lr}: cls {:.4} | pos p (min/mean/max) {:.3?} | neg p {:.3?}",
            last.l_cls,
            stats(&pos_p),
            stats(&neg_p)
        );
    }
}
