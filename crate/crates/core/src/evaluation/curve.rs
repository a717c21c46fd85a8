//! Miss-rate versus false-positives-per-image curves and their log-average
//! summary.

use crate::error::{Error, Result};
use crate::evaluation::matching::{DetOutcome, FrameResult};

/// Number of FPPI sample points.
pub const N_SAMPLES: usize = 9;

/// Miss rates below this floor are clamped before the geometric mean.
const MR_FLOOR: f64 = 1e-4;

/// The nine reference FPPI sample points, `10^(-2 + 0.25 k)` for
/// `k = 0..=8`, spanning 0.01 to 1.0.
pub fn reference_fppi_points() -> [f64; N_SAMPLES] {
    std::array::from_fn(|k| 10f64.powf(-2.0 + 0.25 * k as f64))
}

/// Log-average of sampled miss rates: the geometric mean with each rate
/// floored at 1e-4, or exactly 0 when every rate is 0.
pub fn log_average(miss_rates: &[f64]) -> f64 {
    if miss_rates.is_empty() || miss_rates.iter().all(|&m| m == 0.0) {
        return 0.0;
    }
    let mean_ln: f64 =
        miss_rates.iter().map(|&m| m.max(MR_FLOOR).ln()).sum::<f64>() / miss_rates.len() as f64;
    mean_ln.exp()
}

/// The `(tp, fp, missed)` counts behind one sampled curve position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct OperatingPoint {
    pub tp: usize,
    pub fp: usize,
    pub missed: usize,
}

/// A sampled miss-rate/FPPI curve with its log-average summary.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalCurve {
    /// The reference FPPI sample points.
    pub fppi: [f64; N_SAMPLES],
    /// Miss rate at each sample point.
    pub miss_rate: [f64; N_SAMPLES],
    /// Counts at the operating point chosen for each sample.
    pub points: [OperatingPoint; N_SAMPLES],
    /// Geometric mean of the sampled miss rates (each floored at 1e-4),
    /// or exactly 0 when every sampled miss rate is 0.
    pub log_avg_mr: f64,
}

/// Computes the miss-rate/FPPI curve over a set of frame results.
///
/// Operating points are generated by sweeping a score threshold across the
/// distinct detection scores (ties move together). At each reference FPPI
/// the curve takes the lowest miss rate among operating points with FPPI at
/// most the reference value; the degenerate empty-detection point
/// `(FPPI 0, miss rate 1)` always qualifies.
///
/// Fails when there are no frames or no ground truths at all.
pub fn mr_curve(frames: &[FrameResult]) -> Result<EvalCurve> {
    if frames.is_empty() {
        return Err(Error::Eval("cannot build a curve over zero frames".into()));
    }
    let n_frames = frames.len() as f64;
    let total_gt: usize = frames.iter().map(|f| f.n_gt).sum();
    if total_gt == 0 {
        return Err(Error::Eval("cannot build a curve with zero ground truths".into()));
    }

    // Pool all scored, non-ignored detections.
    let mut scored: Vec<(f64, bool)> = Vec::new();
    for frame in frames {
        for &(score, outcome) in &frame.outcomes {
            if !score.is_finite() {
                return Err(Error::Numeric(format!("non-finite detection score {score}")));
            }
            match outcome {
                DetOutcome::TruePositive => scored.push((score, true)),
                DetOutcome::FalsePositive => scored.push((score, false)),
                DetOutcome::Ignored => {}
            }
        }
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));

    // Operating points: one per distinct score, counting everything at or
    // above it. The implicit start point (threshold above every score) is
    // (fppi 0, mr 1).
    let mut points: Vec<(f64, f64, OperatingPoint)> = Vec::new(); // (fppi, mr, counts)
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0usize;
    while i < scored.len() {
        let score = scored[i].0;
        while i < scored.len() && scored[i].0 == score {
            if scored[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((
            fp as f64 / n_frames,
            1.0 - tp as f64 / total_gt as f64,
            OperatingPoint { tp, fp, missed: total_gt - tp },
        ));
    }

    let fppi = reference_fppi_points();
    let mut miss_rate = [1.0f64; N_SAMPLES];
    let mut chosen = [OperatingPoint::default(); N_SAMPLES];
    for k in 0..N_SAMPLES {
        let mut best_mr = 1.0;
        let mut best_point = OperatingPoint { tp: 0, fp: 0, missed: total_gt };
        for &(f, mr, counts) in &points {
            if f <= fppi[k] && mr < best_mr {
                best_mr = mr;
                best_point = counts;
            }
        }
        miss_rate[k] = best_mr;
        chosen[k] = best_point;
    }

    Ok(EvalCurve { fppi, miss_rate, points: chosen, log_avg_mr: log_average(&miss_rate) })
}
