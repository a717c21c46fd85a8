//! Scratch timing probe: wall time per desk-scale training iteration.

use std::time::Instant;

use iadn_core::dataio::{generate_synthetic_dataset, SynthParams};
use iadn_core::netgraph::{build_network, NetworkConfig, Variant};
use iadn_core::training::TrainConfig;

fn main() {
    let params = SynthParams { n_frames: 20, ..SynthParams::default() };
    let t0 = Instant::now();
    let dataset = generate_synthetic_dataset(&params, 1).unwrap();
    println!("gen 20 frames: {:?}", t0.elapsed());

    for name in ["TDNN", "IATDNN", "IATDNN+IAMSS"] {
        let variant: Variant = name.parse().unwrap();
        let config = NetworkConfig::desk(variant);
        let net = build_network(&config, 0).unwrap();
        let tc = TrainConfig { iterations: 30, ..TrainConfig::default() };
        let t0 = Instant::now();
        let (_net, hist) = iadn_core::training::train(&dataset, net, &tc).unwrap();
        let dt = t0.elapsed();
        println!(
            "{name}: 30 iters in {:.2?} -> {:.1} ms/iter (last loss {:.4})",
            dt,
            dt.as_secs_f64() * 1000.0 / 30.0,
            hist.last().unwrap().total
        );
    }
}
