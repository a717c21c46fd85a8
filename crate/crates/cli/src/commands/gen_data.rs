//! `iadn gen-data`: synthesize a paired visible/thermal pedestrian dataset.

use std::path::PathBuf;

use iadn_core::dataio::{generate_synthetic_dataset, save_dataset, Illumination, SynthParams};

use crate::{CmdError, CmdResult};

fn d() -> SynthParams {
    SynthParams::default()
}

#[derive(clap::Args)]
pub struct Args {
    /// Output dataset directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Number of frames.
    #[arg(long, default_value_t = d().n_frames)]
    pub frames: usize,
    /// Image width in pixels; must be a multiple of 8.
    #[arg(long, default_value_t = d().width)]
    pub width: usize,
    /// Image height in pixels; must be a multiple of 8.
    #[arg(long, default_value_t = d().height)]
    pub height: usize,
    /// Probability that a frame is a day scene.
    #[arg(long, default_value_t = d().day_fraction)]
    pub day_fraction: f64,
    /// Minimum pedestrians attempted per frame.
    #[arg(long, default_value_t = d().min_peds)]
    pub min_peds: usize,
    /// Maximum pedestrians attempted per frame (inclusive).
    #[arg(long, default_value_t = d().max_peds)]
    pub max_peds: usize,
    /// Probability of marking a pedestrian as an ignore region.
    #[arg(long, default_value_t = d().ignore_rate)]
    pub ignore_rate: f64,
    /// RNG seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(args: &Args) -> CmdResult {
    let params = SynthParams {
        n_frames: args.frames,
        width: args.width,
        height: args.height,
        min_peds: args.min_peds,
        max_peds: args.max_peds,
        day_fraction: args.day_fraction,
        ignore_rate: args.ignore_rate,
    };
    // These values came straight from flags, so range problems are usage
    // errors; nothing has touched the filesystem yet.
    params.validate().map_err(|e| CmdError::Usage(e.to_string()))?;

    let dataset = generate_synthetic_dataset(&params, args.seed)?;
    save_dataset(&dataset, &args.out)?;
    println!(
        "wrote {} frames ({} day / {} night, {} annotations) to {}",
        dataset.len(),
        dataset.frames_with(Illumination::Day).count(),
        dataset.frames_with(Illumination::Night).count(),
        dataset.frames.iter().map(|f| f.annotations.len()).sum::<usize>(),
        args.out.display()
    );
    Ok(())
}
