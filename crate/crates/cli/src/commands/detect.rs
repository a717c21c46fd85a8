//! `iadn detect`: run a trained detector over a dataset and write its
//! detections in the interchange format.

use std::path::PathBuf;

use iadn_core::dataio::load_dataset;
use iadn_core::evaluation::{detect_frame, write_detections, Detection};
use iadn_core::netgraph::{load_checkpoint, DetectConfig};

use crate::{CmdError, CmdResult};

fn d() -> DetectConfig {
    DetectConfig::default()
}

#[derive(clap::Args)]
pub struct Args {
    /// Trained checkpoint file.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset directory to run over.
    #[arg(long)]
    pub data: PathBuf,
    /// Output detections file.
    #[arg(long)]
    pub out: PathBuf,
    /// Minimum score for a detection to be kept.
    #[arg(long, default_value_t = d().score_threshold)]
    pub score_threshold: f64,
    /// IoU threshold for non-maximum suppression.
    #[arg(long, default_value_t = d().nms_iou)]
    pub nms_iou: f64,
}

pub fn run(args: &Args) -> CmdResult {
    let config = DetectConfig { score_threshold: args.score_threshold, nms_iou: args.nms_iou };
    config.validate().map_err(|e| CmdError::Usage(e.to_string()))?;

    let net = load_checkpoint(&args.checkpoint)?;
    let dataset = load_dataset(&args.data)?;
    let mut per_frame: Vec<(String, Vec<Detection>)> = Vec::with_capacity(dataset.len());
    for frame in &dataset.frames {
        per_frame.push((frame.id.clone(), detect_frame(&net, frame, &config)?));
    }
    write_detections(&args.out, &per_frame)?;
    let total: usize = per_frame.iter().map(|(_, d)| d.len()).sum();
    println!(
        "wrote {total} detections over {} frames to {}",
        dataset.len(),
        args.out.display()
    );
    Ok(())
}
