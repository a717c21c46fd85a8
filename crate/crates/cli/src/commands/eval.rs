//! `iadn eval`: evaluate a checkpoint (or an externally produced
//! detections file) against a dataset, emitting the report CSV, one curve
//! CSV per subset, and the miss-rate/FPPI plot.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use iadn_core::dataio::{load_dataset, Dataset};
use iadn_core::evaluation::{
    evaluate_detections, evaluate_model, read_detections, Detection, EvalReport,
};
use iadn_core::netgraph::{load_checkpoint, DetectConfig};

use crate::svg::{render_curves, CurveSeries};
use crate::{CmdError, CmdResult};

#[derive(clap::Args)]
pub struct Args {
    /// Dataset directory with the ground-truth annotations.
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint to evaluate.
    #[arg(long, required_unless_present = "detections", conflicts_with = "detections")]
    pub checkpoint: Option<PathBuf>,
    /// Pre-computed detections file to evaluate instead of a checkpoint.
    #[arg(long)]
    pub detections: Option<PathBuf>,
    /// Output directory for the report, curve files, and plot.
    #[arg(long)]
    pub out: PathBuf,
    /// Decoding score threshold. The default is deliberately low so the
    /// curve reaches high-FPPI operating points.
    #[arg(long, default_value_t = 0.01)]
    pub score_threshold: f64,
    /// IoU threshold for non-maximum suppression.
    #[arg(long, default_value_t = 0.45)]
    pub nms_iou: f64,
}

/// Orders a detections file by dataset frame, failing on ids the dataset
/// does not contain (frames without records get empty lists).
fn align_detections(
    dataset: &Dataset,
    path: &Path,
) -> Result<Vec<Vec<Detection>>, CmdError> {
    let mut by_id = read_detections(path)?;
    let lists: Vec<Vec<Detection>> =
        dataset.frames.iter().map(|f| by_id.remove(&f.id).unwrap_or_default()).collect();
    if !by_id.is_empty() {
        let unknown: Vec<&str> = by_id.keys().take(5).map(String::as_str).collect();
        return Err(CmdError::Runtime(format!(
            "{}: {} frame id(s) not present in the dataset (first: {})",
            path.display(),
            by_id.len(),
            unknown.join(", ")
        )));
    }
    Ok(lists)
}

/// Writes `report.csv`, `curve_<subset>.csv` per subset, and `curves.svg`.
/// Identical reports produce byte-identical files.
pub fn emit_report(report: &EvalReport, dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).map_err(|e| CmdError::Runtime(format!("{}: {e}", dir.display())))?;
    let write = |name: &str, contents: &str| -> CmdResult {
        let path = dir.join(name);
        fs::write(&path, contents)
            .map_err(|e| CmdError::Runtime(format!("{}: {e}", path.display())))
    };

    write("report.csv", &report.to_csv())?;
    let mut series = Vec::new();
    for subset in report.subsets() {
        let mut csv = String::from("fppi,miss_rate\n");
        for (fppi, mr) in subset.curve.fppi.iter().zip(&subset.curve.miss_rate) {
            writeln!(csv, "{fppi},{mr}").expect("writing to a String cannot fail");
        }
        write(&format!("curve_{}.csv", subset.name), &csv)?;
        series.push(CurveSeries {
            name: subset.name.clone(),
            fppi: subset.curve.fppi.to_vec(),
            miss_rate: subset.curve.miss_rate.to_vec(),
            log_avg_mr: subset.curve.log_avg_mr,
        });
    }
    write("curves.svg", &render_curves(&series))
}

pub fn run(args: &Args) -> CmdResult {
    let config = DetectConfig { score_threshold: args.score_threshold, nms_iou: args.nms_iou };
    config.validate().map_err(|e| CmdError::Usage(e.to_string()))?;

    let dataset = load_dataset(&args.data)?;
    let report = match (&args.checkpoint, &args.detections) {
        (Some(checkpoint), None) => {
            let net = load_checkpoint(checkpoint)?;
            evaluate_model(&net, &dataset, &config)?
        }
        (None, Some(detections)) => {
            let lists = align_detections(&dataset, detections)?;
            evaluate_detections(&dataset, &lists)?
        }
        // clap enforces exactly one source.
        _ => unreachable!("flag parsing enforces exactly one of --checkpoint/--detections"),
    };

    emit_report(&report, &args.out)?;
    for subset in report.subsets() {
        println!(
            "{:<5} log-avg MR {:.4} over {} frames ({} ground truths)",
            subset.name, subset.curve.log_avg_mr, subset.n_frames, subset.n_gt
        );
    }
    println!("report written to {}", args.out.display());
    Ok(())
}
