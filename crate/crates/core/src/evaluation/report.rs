//! Whole-dataset evaluation: per-subset curves and the report/interchange
//! formats consumed by the command-line tools.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::boxes::BBox;
use crate::dataio::{Dataset, Illumination, MultispectralFrame};
use crate::error::{Error, Result};
use crate::evaluation::curve::{mr_curve, EvalCurve};
use crate::evaluation::matching::{match_frame, FrameResult, ReasonableFilter};
use crate::evaluation::Detection;
use crate::netgraph::decode::{decode_detections, DetectConfig};
use crate::netgraph::network::Network;
use crate::numerics::Scalar;
use crate::training::anchors::{generate_anchors, AnchorGrid};

/// Evaluation results over one frame subset.
#[derive(Clone, Debug)]
pub struct SubsetReport {
    /// `all`, `day`, or `night`.
    pub name: String,
    pub n_frames: usize,
    /// Real (filter-passing, non-ignore) ground truths in the subset.
    pub n_gt: usize,
    pub curve: EvalCurve,
}

/// Curves for the whole dataset and the day/night subsets.
#[derive(Clone, Debug)]
pub struct EvalReport {
    pub all: SubsetReport,
    pub day: SubsetReport,
    pub night: SubsetReport,
}

impl EvalReport {
    /// The three subsets in reporting order.
    pub fn subsets(&self) -> [&SubsetReport; 3] {
        [&self.all, &self.day, &self.night]
    }

    /// Renders the report as CSV: one row per (subset, reference FPPI point)
    /// with the achieved operating counts, then a `log_avg_mr` summary row
    /// per subset.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("subset,fppi,miss_rate,tp,fp,missed\n");
        for subset in self.subsets() {
            for k in 0..subset.curve.fppi.len() {
                let p = subset.curve.points[k];
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    subset.name, subset.curve.fppi[k], subset.curve.miss_rate[k], p.tp, p.fp, p.missed
                )
                .expect("writing to a String cannot fail");
            }
        }
        for subset in self.subsets() {
            writeln!(out, "log_avg_mr,{},{}", subset.name, subset.curve.log_avg_mr)
                .expect("writing to a String cannot fail");
        }
        out
    }
}

fn subset_report(
    name: &str,
    results: &[&FrameResult],
) -> Result<SubsetReport> {
    let owned: Vec<FrameResult> = results.iter().map(|r| (*r).clone()).collect();
    let curve = mr_curve(&owned)
        .map_err(|e| Error::Eval(format!("{name} subset: {e}")))?;
    Ok(SubsetReport {
        name: name.to_string(),
        n_frames: results.len(),
        n_gt: results.iter().map(|r| r.n_gt).sum(),
        curve,
    })
}

/// Evaluates pre-computed detections against a dataset.
///
/// `detections[i]` are the detections for `dataset.frames[i]`. Each frame
/// uses the reasonable filter scaled to its own height. Produces curves for
/// the full set and the day/night subsets; a subset with no frames or no
/// ground truth is an evaluation error.
pub fn evaluate_detections(
    dataset: &Dataset,
    detections: &[Vec<Detection>],
) -> Result<EvalReport> {
    if detections.len() != dataset.frames.len() {
        return Err(Error::Usage(format!(
            "{} detection lists for {} frames",
            detections.len(),
            dataset.frames.len()
        )));
    }
    let mut results = Vec::with_capacity(dataset.frames.len());
    for (frame, dets) in dataset.frames.iter().zip(detections) {
        let filter = ReasonableFilter::for_image_height(frame.height());
        results.push((frame.illumination, match_frame(dets, &frame.annotations, &filter)?));
    }

    let all: Vec<&FrameResult> = results.iter().map(|(_, r)| r).collect();
    let day: Vec<&FrameResult> =
        results.iter().filter(|(i, _)| *i == Illumination::Day).map(|(_, r)| r).collect();
    let night: Vec<&FrameResult> =
        results.iter().filter(|(i, _)| *i == Illumination::Night).map(|(_, r)| r).collect();

    Ok(EvalReport {
        all: subset_report("all", &all)?,
        day: subset_report("day", &day)?,
        night: subset_report("night", &night)?,
    })
}

/// Runs the network on a frame and decodes its detections.
pub fn detect_frame<S: Scalar>(
    net: &Network<S>,
    frame: &MultispectralFrame,
    config: &DetectConfig,
) -> Result<Vec<Detection>> {
    let visible = frame.visible.to_precision::<S>();
    let thermal = frame.thermal.to_precision::<S>();
    let raw = net.forward_tensors(&visible, &thermal)?;
    let grid = grid_for(net, frame.height(), frame.width())?;
    decode_detections(&raw, &grid, config)
}

fn grid_for<S: Scalar>(net: &Network<S>, h: usize, w: usize) -> Result<AnchorGrid> {
    generate_anchors(h, w, net.config.stride(), &net.config.anchors)
}

/// Runs the network over every frame and evaluates the resulting detections.
pub fn evaluate_model<S: Scalar>(
    net: &Network<S>,
    dataset: &Dataset,
    config: &DetectConfig,
) -> Result<EvalReport> {
    net.validate()?;
    config.validate()?;
    let mut detections = Vec::with_capacity(dataset.frames.len());
    // Anchor grids depend only on the frame size; cache them.
    let mut grids: BTreeMap<(usize, usize), AnchorGrid> = BTreeMap::new();
    for frame in &dataset.frames {
        let key = (frame.height(), frame.width());
        if !grids.contains_key(&key) {
            grids.insert(key, grid_for(net, key.0, key.1)?);
        }
        let visible = frame.visible.to_precision::<S>();
        let thermal = frame.thermal.to_precision::<S>();
        let raw = net.forward_tensors(&visible, &thermal)?;
        detections.push(decode_detections(&raw, &grids[&key], config)?);
    }
    evaluate_detections(dataset, &detections)
}

const DETECTIONS_FORMAT_LINE: &str = "iadn-detections v1";

/// Writes detections to the interchange format: a version line, then one
/// `det <frame-id> <x> <y> <w> <h> <score>` record per detection.
pub fn write_detections(
    path: impl AsRef<Path>,
    per_frame: &[(String, Vec<Detection>)],
) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from(DETECTIONS_FORMAT_LINE);
    out.push('\n');
    for (frame_id, dets) in per_frame {
        if frame_id.contains(char::is_whitespace) || frame_id.is_empty() {
            return Err(Error::Data(format!("frame id {frame_id:?} cannot be serialized")));
        }
        for d in dets {
            writeln!(out, "det {} {} {} {} {} {}", frame_id, d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h, d.score)
                .expect("writing to a String cannot fail");
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a detections interchange file into per-frame lists.
pub fn read_detections(path: impl AsRef<Path>) -> Result<BTreeMap<String, Vec<Detection>>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, line)) if line == DETECTIONS_FORMAT_LINE => {}
        Some((_, line)) => {
            return Err(Error::Version {
                found: line.trim().to_string(),
                expected: DETECTIONS_FORMAT_LINE.to_string(),
            })
        }
        None => return Err(Error::Data(format!("{} is empty", path.display()))),
    }
    let mut out: BTreeMap<String, Vec<Detection>> = BTreeMap::new();
    for (lineno, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let context = || format!("{}:{}", path.display(), lineno + 1);
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 7 || fields[0] != "det" {
            return Err(Error::Data(format!("{}: malformed detection line {line:?}", context())));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Data(format!("{}: bad number {s:?}", context())))
        };
        let bbox = BBox::new(num(fields[2])?, num(fields[3])?, num(fields[4])?, num(fields[5])?);
        bbox.ensure_valid(&context())?;
        let score = num(fields[6])?;
        if !(score > 0.0 && score < 1.0) {
            return Err(Error::Data(format!(
                "{}: score {score} outside the open interval (0, 1)",
                context()
            )));
        }
        out.entry(fields[1].to_string()).or_default().push(Detection { bbox, score });
    }
    Ok(out)
}
