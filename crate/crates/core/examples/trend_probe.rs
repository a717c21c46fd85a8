//! Scratch probe for the trend experiments: trains desk-scale variants on a
//! synthetic dataset and reports held-out miss rates and illumination
//! accuracy. Knobs via env vars to avoid recompiles.

use std::time::Instant;

use iadn_core::dataio::{generate_synthetic_dataset, Illumination, SynthParams};
use iadn_core::netgraph::{build_network, DetectConfig, Network, NetworkConfig, Variant};
use iadn_core::training::{train_with_observer, TrainConfig};

fn env_usize(key: &str, default: usize) -> usize {
    std::env::var(key).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn env_f64(key: &str, default: f64) -> f64 {
    std::env::var(key).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn env_str(key: &str, default: &str) -> String {
    std::env::var(key).unwrap_or_else(|_| default.to_string())
}

fn illum_accuracy(net: &Network<f32>, dataset: &iadn_core::dataio::Dataset) -> (f64, f64) {
    let mut counts = [[0usize; 2]; 2]; // [label][correct]
    for frame in &dataset.frames {
        let w = net.predict_illumination(&frame.visible, &frame.thermal).unwrap();
        let label_day = frame.illumination == Illumination::Day;
        let correct = w.predicts_day() == label_day;
        counts[usize::from(label_day)][usize::from(correct)] += 1;
    }
    let acc = |c: [usize; 2]| c[1] as f64 / (c[0] + c[1]) as f64;
    (acc(counts[1]), acc(counts[0])) // (day, night)
}

fn main() {
    let iters = env_usize("ITERS", 600);
    let eval_every = env_usize("EVAL_EVERY", 0);
    let lr = env_f64("LR", 0.01);
    let lr_decay = env_f64("LR_DECAY", 1.0);
    let lr_decay_every = env_usize("LR_DECAY_EVERY", 0);
    let seeds: Vec<u64> = env_str("SEEDS", "0").split(',').map(|s| s.parse().unwrap()).collect();
    let variants: Vec<String> =
        env_str("VARIANTS", "IATDNN").split(';').map(str::to_string).collect();
    let do_illum = env_usize("ILLUM", 0) == 1;

    let train_params = SynthParams { n_frames: env_usize("FRAMES", 1000), ..SynthParams::default() };
    let eval_params = SynthParams { n_frames: 200, ..SynthParams::default() };
    let t0 = Instant::now();
    let train_set = generate_synthetic_dataset(&train_params, 42).unwrap();
    let eval_set = generate_synthetic_dataset(&eval_params, 43).unwrap();
    println!(
        "datasets: {} train / {} eval frames in {:.2?}",
        train_set.len(),
        eval_set.len(),
        t0.elapsed()
    );

    let detect = DetectConfig { score_threshold: 0.01, nms_iou: 0.45 };
    for name in &variants {
        let variant: Variant = name.parse().unwrap();
        let config = NetworkConfig::desk(variant);
        let mut mrs = Vec::new();
        for &seed in &seeds {
            let net = build_network(&config, seed).unwrap();
            let tc = TrainConfig {
                iterations: iters,
                seed,
                learning_rate: lr,
                lr_decay,
                lr_decay_every,
                ..TrainConfig::default()
            };
            let t0 = Instant::now();
            let (net, hist) = train_with_observer(&train_set, net, &tc, |ev| {
                if eval_every > 0 && (ev.iteration + 1) % eval_every == 0 && ev.iteration + 1 < iters
                {
                    let report =
                        iadn_core::evaluation::evaluate_model(ev.net, &eval_set, &detect).unwrap();
                    println!(
                        "  {name} seed {seed} iter {}: MR all {:.4} (loss {:.3})",
                        ev.iteration + 1,
                        report.all.curve.log_avg_mr,
                        ev.loss.total
                    );
                }
                Ok(())
            })
            .unwrap();
            let train_dt = t0.elapsed();
            let report = iadn_core::evaluation::evaluate_model(&net, &eval_set, &detect).unwrap();
            let mr = report.all.curve.log_avg_mr;
            mrs.push(mr);
            print!(
                "{name} seed {seed}: MR all {:.4} day {:.4} night {:.4} \
                 (loss {:.3} -> {:.3}, train {:.1?})",
                mr,
                report.day.curve.log_avg_mr,
                report.night.curve.log_avg_mr,
                hist.first().unwrap().total,
                hist.last().unwrap().total,
                train_dt,
            );
            if do_illum && config.needs_ifcnn() {
                let (day_acc, night_acc) = illum_accuracy(&net, &eval_set);
                print!(" illum day {:.1}% night {:.1}%", 100.0 * day_acc, 100.0 * night_acc);
            }
            println!();
        }
        mrs.sort_by(f64::total_cmp);
        println!("{name}: median all-day MR {:.4}", mrs[mrs.len() / 2]);
    }
}
