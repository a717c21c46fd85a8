//! Synthetic paired visible/thermal scene generator.
//!
//! The generator builds scenes whose modality usefulness flips with
//! illumination, mirroring the situation the gated architecture is designed
//! for:
//!
//! * **Day**: the visible image is bright and textured with pedestrians as
//!   dark, high-contrast silhouettes. The thermal image is washed out —
//!   pedestrians are barely warmer than the background — while sun-heated
//!   clutter (poles, trunks, bollards) is dark in the visible image and as
//!   hot as a night pedestrian, so thermal evidence alone is misleading.
//! * **Night**: the visible image is dark and noisy with pedestrians nearly
//!   invisible, while the thermal image shows them as bright blobs on a cool
//!   background. Residual clutter (cooling surfaces) sits at exactly the
//!   daytime pedestrian temperature.
//!
//! The clutter makes the locally optimal decision rule depend on
//! illumination: a dark vertical shape that is *hot* is a pedestrian at
//! night but background at day, and one that is *mildly warm* is a
//! pedestrian at day but background at night. The thermal background level
//! is the same in both conditions, so neither absolute temperature nor
//! thermal contrast reveals the condition — only the visible channel does,
//! whose mean luminance separates day from night by a wide margin.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::boxes::BBox;
use crate::dataio::{Annotation, Dataset, Illumination, MultispectralFrame};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Parameters of the synthetic scene generator.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SynthParams {
    /// Number of frames to generate.
    pub n_frames: usize,
    /// Image width in pixels; must be a multiple of 8 (the feature stride).
    pub width: usize,
    /// Image height in pixels; must be a multiple of 8.
    pub height: usize,
    /// Minimum pedestrians attempted per frame.
    pub min_peds: usize,
    /// Maximum pedestrians attempted per frame (inclusive).
    pub max_peds: usize,
    /// Probability that a frame is a day scene.
    pub day_fraction: f64,
    /// Probability that an otherwise-normal pedestrian is marked as an
    /// ignore region (on top of the automatic smallness/truncation rules).
    pub ignore_rate: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            n_frames: 100,
            width: 160,
            height: 128,
            min_peds: 1,
            max_peds: 4,
            day_fraction: 0.65,
            ignore_rate: 0.1,
        }
    }
}

impl SynthParams {
    /// Checks parameter ranges.
    pub fn validate(&self) -> Result<()> {
        if self.n_frames == 0 {
            return Err(Error::Config("n_frames must be >= 1".into()));
        }
        if self.width < 16 || self.height < 16 || self.width % 8 != 0 || self.height % 8 != 0 {
            return Err(Error::Config(format!(
                "image size {}x{} must be at least 16x16 and divisible by 8",
                self.width, self.height
            )));
        }
        if self.min_peds > self.max_peds {
            return Err(Error::Config(format!(
                "min_peds {} exceeds max_peds {}",
                self.min_peds, self.max_peds
            )));
        }
        for (name, v) in [("day_fraction", self.day_fraction), ("ignore_rate", self.ignore_rate)] {
            if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                return Err(Error::Config(format!("{name} {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Pedestrian aspect ratio (width / height) used by the generator.
const PED_ASPECT: f64 = 0.41;

/// Pedestrians drawn smaller than this are marked as ignore regions.
const MIN_CLEAR_HEIGHT: f64 = 24.0;

/// Pedestrians with less than this fraction visible are ignore regions.
const MIN_CLEAR_VISIBILITY: f64 = 0.5;

struct Palette {
    vis_base: f64,
    vis_texture_amp: f64,
    vis_noise: f64,
    thm_base: f64,
    thm_noise: f64,
}

const DAY: Palette = Palette {
    vis_base: 0.62,
    vis_texture_amp: 0.12,
    vis_noise: 0.05,
    thm_base: 0.36,
    thm_noise: 0.04,
};

const NIGHT: Palette = Palette {
    vis_base: 0.045,
    vis_texture_amp: 0.0,
    vis_noise: 0.02,
    thm_base: 0.36,
    thm_noise: 0.04,
};

/// Thermal intensity of night pedestrians and of sun-heated day clutter.
/// Sharing one range keeps a hot vertical shape locally ambiguous: whether
/// it is a pedestrian depends on the illumination condition.
const HOT: (f64, f64) = (0.78, 0.95);

/// Thermal intensity of day pedestrians and of residual night clutter —
/// the mirror-image ambiguity of [`HOT`].
const WARM: (f64, f64) = (0.44, 0.50);

/// Generates a dataset deterministically from `seed`: equal seeds produce
/// byte-identical datasets, different seeds different ones.
pub fn generate_synthetic_dataset(params: &SynthParams, seed: u64) -> Result<Dataset> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frames = Vec::with_capacity(params.n_frames);
    for i in 0..params.n_frames {
        frames.push(generate_frame(params, format!("f{i:06}"), &mut rng));
    }
    let ds = Dataset { frames };
    ds.validate()?;
    Ok(ds)
}

fn generate_frame(params: &SynthParams, id: String, rng: &mut ChaCha8Rng) -> MultispectralFrame {
    let (w, h) = (params.width, params.height);
    let day = rng.gen::<f64>() < params.day_fraction;
    let palette = if day { &DAY } else { &NIGHT };

    // Scene layout first, pixels second, so the draw order is fixed.
    let mut annotations = Vec::new();
    let mut ped_rects: Vec<(BBox, f64)> = Vec::new(); // box + visible darkness
    let n_peds = rng.gen_range(params.min_peds..=params.max_peds);
    for _ in 0..n_peds {
        let ph = rng.gen_range(20.0..60.0);
        let pw = PED_ASPECT * ph;
        let full = BBox::from_center(rng.gen_range(0.0..w as f64), rng.gen_range(0.0..h as f64), pw, ph);
        let Some(clipped) = full.clipped_to(w as f64, h as f64) else {
            continue;
        };
        // Clamp: re-deriving the clipped area can overshoot by a ULP.
        let visibility = (clipped.area() / full.area()).clamp(0.0, 1.0);
        let ignore = ph < MIN_CLEAR_HEIGHT
            || visibility < MIN_CLEAR_VISIBILITY
            || rng.gen::<f64>() < params.ignore_rate;
        annotations.push(Annotation { bbox: clipped, ignore, visibility });
        ped_rects.push((clipped, rng.gen_range(0.08..0.22)));
    }

    // Pedestrian-shaped clutter that wears the *other* condition's
    // pedestrian signature. Day: sun-heated surfaces, dark in the visible
    // image and hot like a night pedestrian. Night: cooling surfaces at the
    // daytime pedestrian temperature, invisible in the visible image.
    let mut clutter: Vec<(BBox, f64, Option<f64>)> = Vec::new(); // box, heat, visible darkness
    let n_clutter = if day { rng.gen_range(3..=8) } else { rng.gen_range(1..=4) };
    for _ in 0..n_clutter {
        let ch = rng.gen_range(18.0..55.0);
        let cw = PED_ASPECT * ch * rng.gen_range(0.8..1.3);
        let full = BBox::from_center(rng.gen_range(0.0..w as f64), rng.gen_range(0.0..h as f64), cw, ch);
        if let Some(clipped) = full.clipped_to(w as f64, h as f64) {
            let heat =
                if day { rng.gen_range(HOT.0..HOT.1) } else { rng.gen_range(WARM.0..WARM.1) };
            let darkness = day.then(|| rng.gen_range(0.05..0.20));
            clutter.push((clipped, heat, darkness));
        }
    }

    // Visible background: smooth texture plus noise (day), near-black noise
    // (night). Channel gains give the texture a slight tint.
    let gains = [1.0f64, 0.97, 0.92];
    let (fx, fy, phase) = (
        rng.gen_range(0.01..0.05),
        rng.gen_range(0.01..0.05),
        rng.gen_range(0.0..std::f64::consts::TAU),
    );
    let mut vis = vec![0f32; h * w * 3];
    let mut thm = vec![0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            let tex = palette.vis_texture_amp
                * (std::f64::consts::TAU * (fx * x as f64 + fy * y as f64) + phase).sin();
            for (c, gain) in gains.iter().enumerate() {
                let noise = rng.gen_range(-palette.vis_noise..palette.vis_noise);
                vis[(y * w + x) * 3 + c] = ((palette.vis_base + tex) * gain + noise) as f32;
            }
            let tn = rng.gen_range(-palette.thm_noise..palette.thm_noise);
            thm[y * w + x] = (palette.thm_base + tn) as f32;
        }
    }

    // Clutter under the pedestrians: heat in the thermal channel, and (day
    // only) a dark shape in the visible channel too.
    for (rect, heat, darkness) in &clutter {
        fill_rect(&mut thm, w, 1, 0, rect, |rng| heat + rng.gen_range(-0.02..0.02), rng);
        if let Some(darkness) = darkness {
            for c in 0..3 {
                fill_rect(&mut vis, w, 3, c, rect, |rng| darkness + rng.gen_range(-0.02..0.02), rng);
            }
        }
    }

    // Pedestrians on top: dark silhouettes in the visible image (a barely
    // visible lift at night), warm in thermal (weak in day, bright at night).
    for (rect, darkness) in &ped_rects {
        if day {
            for c in 0..3 {
                fill_rect(&mut vis, w, 3, c, rect, |rng| darkness + rng.gen_range(-0.02..0.02), rng);
            }
            let warmth = rng.gen_range(WARM.0..WARM.1);
            fill_rect(&mut thm, w, 1, 0, rect, |rng| warmth + rng.gen_range(-0.02..0.02), rng);
        } else {
            for c in 0..3 {
                fill_rect(&mut vis, w, 3, c, rect, |rng| {
                    NIGHT.vis_base + 0.015 + rng.gen_range(-0.02..0.02)
                }, rng);
            }
            let warmth = rng.gen_range(HOT.0..HOT.1);
            fill_rect(&mut thm, w, 1, 0, rect, |rng| warmth + rng.gen_range(-0.02..0.02), rng);
        }
    }

    MultispectralFrame {
        id,
        illumination: if day { Illumination::Day } else { Illumination::Night },
        visible: quantize(vec![h, w, 3], vis),
        thermal: quantize(vec![h, w, 1], thm),
        annotations,
    }
}

/// Writes `value(rng)` into every pixel whose center falls inside `rect`,
/// for channel `c` of a `channels`-deep buffer.
fn fill_rect(
    buf: &mut [f32],
    width: usize,
    channels: usize,
    c: usize,
    rect: &BBox,
    mut value: impl FnMut(&mut ChaCha8Rng) -> f64,
    rng: &mut ChaCha8Rng,
) {
    let height = buf.len() / (width * channels);
    let y0 = rect.y.floor().max(0.0) as usize;
    let y1 = (rect.y2().ceil() as usize).min(height);
    let x0 = rect.x.floor().max(0.0) as usize;
    let x1 = (rect.x2().ceil() as usize).min(width);
    for y in y0..y1 {
        for x in x0..x1 {
            if rect.contains(x as f64 + 0.5, y as f64 + 0.5) {
                buf[(y * width + x) * channels + c] = value(rng) as f32;
            }
        }
    }
}

/// Clamps to [0, 1] and snaps to the 8-bit grid (k/255) so that the
/// in-memory dataset round-trips bit-exactly through 8-bit image files.
fn quantize(shape: Vec<usize>, data: Vec<f32>) -> Tensor<f32> {
    let q: Vec<f32> = data
        .into_iter()
        .map(|v| {
            let byte = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            byte as f32 / 255.0
        })
        .collect();
    Tensor::from_vec(shape, q).expect("quantized image is finite by construction")
}
