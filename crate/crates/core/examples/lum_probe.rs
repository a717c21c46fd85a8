//! Scratch probe: luminance separability margins of the synthetic generator
//! across seeds and frame sizes.

use iadn_core::dataio::{generate_synthetic_dataset, Illumination, SynthParams};

fn main() {
    for (w, h) in [(64usize, 48usize), (160, 128)] {
        let mut min_day = f64::INFINITY;
        let mut max_night = f64::NEG_INFINITY;
        let mut n_day = 0usize;
        let mut n = 0usize;
        for seed in 0..10u64 {
            let params = SynthParams { n_frames: 300, width: w, height: h, ..Default::default() };
            let ds = generate_synthetic_dataset(&params, seed).unwrap();
            for f in &ds.frames {
                let lum = f.visible_mean_luminance();
                if f.illumination == Illumination::Day {
                    min_day = min_day.min(lum);
                    n_day += 1;
                } else {
                    max_night = max_night.max(lum);
                }
                n += 1;
            }
        }
        println!(
            "{w}x{h}: {n} frames ({n_day} day) min day lum {min_day:.4} max night lum {max_night:.4}"
        );
    }
}
