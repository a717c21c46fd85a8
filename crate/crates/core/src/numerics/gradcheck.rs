//! Finite-difference verification of tape gradients.
//!
//! The checker drives a user-supplied graph builder at `f64` precision:
//! once to obtain analytic gradients via the backward sweep, then twice per
//! probed coordinate with central differences. Builders must be
//! deterministic — the same inputs must produce the same graph and value.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::tape::{Tape, ValueId};
use crate::numerics::tensor::Tensor;

/// Controls for [`grad_check`].
#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub eps: f64,
    /// Coordinate budget per input tensor; larger tensors are subsampled
    /// (without replacement) down to this many coordinates.
    pub max_coords_per_tensor: usize,
    /// Seed for the coordinate subsampling.
    pub seed: u64,
    /// Coordinates where the analytic and numeric derivatives are *both*
    /// below this magnitude are reported as unmeasurable instead of scored.
    ///
    /// A central difference of a scalar around `|f|` carries rounding noise
    /// of roughly `ulp(|f|) / (2 eps)` — about `1e-11` for a loss near 1 at
    /// the default step — so a relative-error statistic over derivatives
    /// much smaller than that measures floating-point noise, not gradient
    /// correctness (the same reason the layer-level relu check skips
    /// near-kink points). A genuinely wrong gradient at a coordinate that
    /// matters leaves at least one of the two derivatives large, so it is
    /// still scored. Set to 0 to score every probed coordinate.
    pub measurable_floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            eps: 1e-5,
            max_coords_per_tensor: 200,
            seed: 0,
            measurable_floor: 1e-6,
        }
    }
}

/// Outcome of a gradient check.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Worst relative error over all scored coordinates.
    pub max_rel_error: f64,
    /// Number of coordinates probed and scored.
    pub coords_checked: usize,
    /// Probed coordinates whose derivatives sat below the measurable
    /// floor on both sides and were therefore not scored.
    pub coords_unmeasurable: usize,
    /// `(input index, flat coordinate)` of the worst error, if any
    /// coordinate was scored.
    pub worst_coord: Option<(usize, usize)>,
    /// Analytic and numeric derivative at the worst coordinate.
    pub worst_pair: Option<(f64, f64)>,
}

/// Relative error between an analytic and a numeric derivative, guarded
/// against division by values near zero.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / denom
}

/// Compares tape gradients of a scalar-valued graph against central finite
/// differences at the given evaluation point.
///
/// `build` receives a fresh tape and the leaf ids for `point` (in order) and
/// must return the id of a scalar output. Fails if the output is not scalar
/// or if any evaluation fails.
pub fn grad_check<F>(
    build: F,
    point: &[Tensor<f64>],
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[ValueId]) -> Result<ValueId>,
{
    let eval_full = |tensors: &[Tensor<f64>]| -> Result<(Tape<f64>, Vec<ValueId>, ValueId)> {
        let mut tape = Tape::new();
        let ids: Vec<ValueId> = tensors
            .iter()
            .map(|t| tape.leaf(t.clone()))
            .collect::<Result<_>>()?;
        let out = build(&mut tape, &ids)?;
        if !tape.value(out).is_scalar() {
            return Err(Error::Usage(format!(
                "grad_check requires a scalar objective, got shape {:?}",
                tape.value(out).shape()
            )));
        }
        Ok((tape, ids, out))
    };
    let eval_value = |tensors: &[Tensor<f64>]| -> Result<f64> {
        let (tape, _, out) = eval_full(tensors)?;
        tape.value(out).item()
    };

    // Analytic pass.
    let (tape, ids, out) = eval_full(point)?;
    let grads = tape.backprop_scalar(out)?;
    let analytic: Vec<Tensor<f64>> =
        ids.iter().map(|&id| grads.grad_or_zeros(id)).collect();
    drop(tape);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut working: Vec<Tensor<f64>> = point.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        coords_checked: 0,
        coords_unmeasurable: 0,
        worst_coord: None,
        worst_pair: None,
    };

    for ti in 0..point.len() {
        let numel = point[ti].numel();
        if numel == 0 {
            continue;
        }
        let coords: Vec<usize> = if numel <= opts.max_coords_per_tensor {
            (0..numel).collect()
        } else {
            let mut picked =
                rand::seq::index::sample(&mut rng, numel, opts.max_coords_per_tensor).into_vec();
            picked.sort_unstable();
            picked
        };
        for ci in coords {
            let orig = working[ti].data()[ci];
            working[ti].data_mut()[ci] = orig + opts.eps;
            let f_plus = eval_value(&working)?;
            working[ti].data_mut()[ci] = orig - opts.eps;
            let f_minus = eval_value(&working)?;
            working[ti].data_mut()[ci] = orig;

            let numeric = (f_plus - f_minus) / (2.0 * opts.eps);
            let a = analytic[ti].data()[ci];
            if a.abs().max(numeric.abs()) < opts.measurable_floor {
                report.coords_unmeasurable += 1;
                continue;
            }
            let rel = relative_error(a, numeric);
            report.coords_checked += 1;
            if rel > report.max_rel_error || report.worst_coord.is_none() {
                report.max_rel_error = rel;
                report.worst_coord = Some((ti, ci));
                report.worst_pair = Some((a, numeric));
            }
        }
    }
    Ok(report)
}
