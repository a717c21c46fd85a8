//! Scratch probe: activation magnitudes through the network at init, and
//! long-horizon single-frame memorization.

use iadn_core::dataio::{generate_synthetic_dataset, Dataset, SynthParams};
use iadn_core::netgraph::{build_network, NetworkConfig, Variant};
use iadn_core::numerics::{apply_layer, LayerSpec, Tensor};
use iadn_core::training::{train, TrainConfig};

fn std_of(v: &[f32]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().map(|&x| f64::from(x)).sum::<f64>() / n;
    let var = v.iter().map(|&x| (f64::from(x) - mean).powi(2)).sum::<f64>() / n;
    var.sqrt()
}

fn main() {
    let params = SynthParams { n_frames: 8, ..SynthParams::default() };
    let full = generate_synthetic_dataset(&params, 5).unwrap();
    let frame = full
        .frames
        .iter()
        .find(|f| f.annotations.iter().any(|a| !a.ignore))
        .unwrap()
        .clone();

    let config = NetworkConfig::desk("IATDNN".parse::<Variant>().unwrap());
    let net = build_network(&config, 0).unwrap();

    let run_stream = |prefix: &str, input: &Tensor<f32>| -> Tensor<f32> {
        let mut x = input.clone();
        for (i, stage) in config.backbone.iter().enumerate() {
            let spec = LayerSpec::Conv2d {
                kernel: stage.kernel,
                stride: 1,
                padding: stage.kernel / 2,
                out_channels: stage.out_channels,
            };
            let w = &net.params[&format!("{prefix}.stage{i}.conv.weight")];
            let b = &net.params[&format!("{prefix}.stage{i}.conv.bias")];
            x = apply_layer(&spec, &[&x], &[w, b]).unwrap();
            x = apply_layer(&LayerSpec::Relu, &[&x], &[]).unwrap();
            if stage.pool {
                x = apply_layer(&LayerSpec::MaxPool2d { size: 2, stride: 2 }, &[&x], &[]).unwrap();
            }
            println!("{prefix} stage{i}: std {:.3e}", std_of(x.data()));
        }
        x
    };
    println!("input vis std {:.3e} thm std {:.3e}", std_of(frame.visible.data()), std_of(frame.thermal.data()));
    let fv = run_stream("vis", &frame.visible);
    let ft = run_stream("thm", &frame.thermal);
    let fused = apply_layer(&LayerSpec::ConcatChannels, &[&fv, &ft], &[]).unwrap();
    println!("fused TSFM: std {:.3e}", std_of(fused.data()));
    let pro_spec =
        LayerSpec::Conv2d { kernel: 3, stride: 1, padding: 1, out_channels: config.conv_pro_channels };
    let pro = apply_layer(
        &pro_spec,
        &[&fused],
        &[&net.params["conv_pro.weight"], &net.params["conv_pro.bias"]],
    )
    .unwrap();
    println!("conv_pro (pre-relu): std {:.3e}", std_of(pro.data()));

    // Long memorization: does cls ever fall below 0.05?
    let single = Dataset { frames: vec![frame] };
    let tdnn = NetworkConfig::desk("TDNN".parse::<Variant>().unwrap());
    for lr in [0.001, 0.003, 0.01, 0.03, 0.1] {
        let net = build_network(&tdnn, 0).unwrap();
        let tc = TrainConfig { iterations: 600, learning_rate: lr, ..TrainConfig::default() };
        let (_, hist) = train(&single, net, &tc).unwrap();
        let h300 = &hist[299];
        let h600 = &hist[599];
        println!(
            "lr {lr}: iter300 cls {:.4} bbox {:.4} | iter600 cls {:.4} bbox {:.4}",
            h300.l_cls, h300.l_bbox, h600.l_cls, h600.l_bbox
        );
    }
}
