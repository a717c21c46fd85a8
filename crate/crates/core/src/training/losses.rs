//! The multi-task loss: illumination, detection (classification + box
//! regression), and segmentation terms, assembled on the autodiff tape.
//!
//! All probability inputs arrive post-sigmoid (and post-gating); binary
//! cross-entropy clamps them into `[1e-7, 1 - 1e-7]` before the logarithm,
//! with zero gradient where the clamp is active.

use crate::dataio::{CellTarget, Illumination, SegTargets};
use crate::error::{Error, Result};
use crate::netgraph::forward::TracedOutputs;
use crate::numerics::{Scalar, Tape, TapeOp, Tensor, ValueId};
use crate::training::anchors::SampleSet;

/// Clamp bound for probabilities entering a logarithm.
pub const PROB_CLAMP: f64 = 1e-7;

/// How per-element losses are reduced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossNorm {
    /// Means: classification over the sample size, box regression over the
    /// positive count, segmentation over the supervised cell count. Keeps
    /// the loss coefficients meaningful across batch sizes.
    Mean,
    /// Plain sums, matching the loss expressions written without
    /// normalization.
    PaperSums,
}

/// The recorded loss components for one iteration, in f64.
///
/// `total` is always computed as `l_d + lambda_ia * l_i + lambda_sm * l_s`
/// in that order, so the additivity identity holds exactly in f64
/// arithmetic. `l_cls` and `l_bbox` are the unweighted components of `l_d`
/// (diagnostics; `l_d = l_cls + lambda_bb * l_bbox`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub l_i: f64,
    pub l_d: f64,
    pub l_s: f64,
    pub l_cls: f64,
    pub l_bbox: f64,
    pub total: f64,
}

/// Smooth L1: `0.5 x^2` for `|x| < 1`, else `|x| - 0.5`.
pub fn smooth_l1(x: f64) -> f64 {
    if x.abs() < 1.0 {
        0.5 * x * x
    } else {
        x.abs() - 0.5
    }
}

/// Derivative of [`smooth_l1`]: `x` inside the quadratic zone, else `±1`.
pub fn smooth_l1_grad(x: f64) -> f64 {
    if x.abs() < 1.0 {
        x
    } else {
        x.signum()
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Binary cross-entropy of a probability against a 0/1 target, with the
/// probability clamped away from the endpoints.
pub fn bce_loss(p: f64, target: f64) -> f64 {
    let p = clamp_prob(p);
    -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
}

/// The illumination term for a hard day/night label: `-ln w_label` with the
/// selected weight clamped.
pub fn illumination_nll(day_weight: f64, night_weight: f64, label: Illumination) -> f64 {
    let w = match label {
        Illumination::Day => day_weight,
        Illumination::Night => night_weight,
    };
    -clamp_prob(w).ln()
}

/// Sum of clamped binary cross-entropies over selected tensor elements,
/// divided by a fixed divisor. Output is a scalar.
#[derive(Debug)]
struct SelectBceOp {
    /// Flat element indices into the input tensor.
    indices: Vec<usize>,
    /// 0/1 targets, parallel to `indices`.
    targets: Vec<f64>,
    divisor: f64,
}

impl<S: Scalar> TapeOp<S> for SelectBceOp {
    fn name(&self) -> &str {
        "select_bce"
    }

    fn forward(&self, inputs: &[&Tensor<S>]) -> Result<Tensor<S>> {
        let x = single_input(inputs, "select_bce")?;
        check_indices(&self.indices, x.numel(), "select_bce")?;
        let mut sum = 0.0;
        for (&i, &t) in self.indices.iter().zip(&self.targets) {
            sum += bce_loss(x.data()[i].widen(), t);
        }
        Tensor::from_vec(vec![1], vec![S::from_f64(sum / self.divisor)])
    }

    fn backward(
        &self,
        inputs: &[&Tensor<S>],
        _output: &Tensor<S>,
        grad_out: &Tensor<S>,
    ) -> Result<Vec<Tensor<S>>> {
        let x = inputs[0];
        let g = grad_out.data()[0].widen();
        let mut dx = vec![0.0f64; x.numel()];
        for (&i, &t) in self.indices.iter().zip(&self.targets) {
            let p = x.data()[i].widen();
            // Zero gradient where the clamp is active: the clamped value no
            // longer depends on the input.
            if p > PROB_CLAMP && p < 1.0 - PROB_CLAMP {
                dx[i] += (-t / p + (1.0 - t) / (1.0 - p)) / self.divisor * g;
            }
        }
        Ok(vec![Tensor::from_vec(
            x.shape().to_vec(),
            dx.into_iter().map(S::from_f64).collect(),
        )?])
    }
}

/// Sum of smooth-L1 residuals over selected tensor elements against fixed
/// targets, divided by a fixed divisor. Output is a scalar.
#[derive(Debug)]
struct SelectSmoothL1Op {
    indices: Vec<usize>,
    targets: Vec<f64>,
    divisor: f64,
}

impl<S: Scalar> TapeOp<S> for SelectSmoothL1Op {
    fn name(&self) -> &str {
        "select_smooth_l1"
    }

    fn forward(&self, inputs: &[&Tensor<S>]) -> Result<Tensor<S>> {
        let x = single_input(inputs, "select_smooth_l1")?;
        check_indices(&self.indices, x.numel(), "select_smooth_l1")?;
        let mut sum = 0.0;
        for (&i, &t) in self.indices.iter().zip(&self.targets) {
            sum += smooth_l1(x.data()[i].widen() - t);
        }
        Tensor::from_vec(vec![1], vec![S::from_f64(sum / self.divisor)])
    }

    fn backward(
        &self,
        inputs: &[&Tensor<S>],
        _output: &Tensor<S>,
        grad_out: &Tensor<S>,
    ) -> Result<Vec<Tensor<S>>> {
        let x = inputs[0];
        let g = grad_out.data()[0].widen();
        let mut dx = vec![0.0f64; x.numel()];
        for (&i, &t) in self.indices.iter().zip(&self.targets) {
            dx[i] += smooth_l1_grad(x.data()[i].widen() - t) / self.divisor * g;
        }
        Ok(vec![Tensor::from_vec(
            x.shape().to_vec(),
            dx.into_iter().map(S::from_f64).collect(),
        )?])
    }
}

/// `-ln` of one clamped component of a probability vector. Output is a
/// scalar; used on the `[2]` illumination weights.
#[derive(Debug)]
struct SelectNllOp {
    index: usize,
}

impl<S: Scalar> TapeOp<S> for SelectNllOp {
    fn name(&self) -> &str {
        "select_nll"
    }

    fn forward(&self, inputs: &[&Tensor<S>]) -> Result<Tensor<S>> {
        let x = single_input(inputs, "select_nll")?;
        if self.index >= x.numel() {
            return Err(Error::Shape(format!(
                "select_nll index {} out of range for {} elements",
                self.index,
                x.numel()
            )));
        }
        let loss = -clamp_prob(x.data()[self.index].widen()).ln();
        Tensor::from_vec(vec![1], vec![S::from_f64(loss)])
    }

    fn backward(
        &self,
        inputs: &[&Tensor<S>],
        _output: &Tensor<S>,
        grad_out: &Tensor<S>,
    ) -> Result<Vec<Tensor<S>>> {
        let x = inputs[0];
        let g = grad_out.data()[0].widen();
        let mut dx = vec![0.0f64; x.numel()];
        let p = x.data()[self.index].widen();
        if p > PROB_CLAMP && p < 1.0 - PROB_CLAMP {
            dx[self.index] = -g / p;
        }
        Ok(vec![Tensor::from_vec(
            x.shape().to_vec(),
            dx.into_iter().map(S::from_f64).collect(),
        )?])
    }
}

/// Weighted sum of scalar inputs: `out = sum_i coeff_i * x_i`, evaluated
/// left to right.
#[derive(Debug)]
struct AffineCombineOp {
    coeffs: Vec<f64>,
}

impl<S: Scalar> TapeOp<S> for AffineCombineOp {
    fn name(&self) -> &str {
        "affine_combine"
    }

    fn forward(&self, inputs: &[&Tensor<S>]) -> Result<Tensor<S>> {
        if inputs.len() != self.coeffs.len() {
            return Err(Error::Usage(format!(
                "affine_combine has {} coefficients but {} inputs",
                self.coeffs.len(),
                inputs.len()
            )));
        }
        let mut total = S::zero();
        for (x, &c) in inputs.iter().zip(&self.coeffs) {
            if !x.is_scalar() {
                return Err(Error::Shape(format!(
                    "affine_combine expects scalar inputs, got shape {:?}",
                    x.shape()
                )));
            }
            total += S::from_f64(c) * x.data()[0];
        }
        Tensor::from_vec(vec![1], vec![total])
    }

    fn backward(
        &self,
        inputs: &[&Tensor<S>],
        _output: &Tensor<S>,
        grad_out: &Tensor<S>,
    ) -> Result<Vec<Tensor<S>>> {
        let g = grad_out.data()[0];
        Ok(inputs
            .iter()
            .zip(&self.coeffs)
            .map(|(_, &c)| Tensor::from_vec(vec![1], vec![S::from_f64(c) * g]).expect("scalar"))
            .collect())
    }
}

fn single_input<'a, S: Scalar>(
    inputs: &'a [&Tensor<S>],
    name: &str,
) -> Result<&'a Tensor<S>> {
    if inputs.len() != 1 {
        return Err(Error::Usage(format!("{name} takes one input, got {}", inputs.len())));
    }
    Ok(inputs[0])
}

fn check_indices(indices: &[usize], numel: usize, name: &str) -> Result<()> {
    if let Some(&bad) = indices.iter().find(|&&i| i >= numel) {
        return Err(Error::Shape(format!(
            "{name} index {bad} out of range for {numel} elements"
        )));
    }
    Ok(())
}

/// Records the classification term over a sampled anchor set: mean (or sum)
/// of clamped BCE between fused anchor probabilities and 0/1 labels.
pub fn cls_loss_on_tape<S: Scalar>(
    tape: &mut Tape<S>,
    cls_prob: ValueId,
    sample: &SampleSet,
    norm: LossNorm,
) -> Result<ValueId> {
    if sample.is_empty() {
        return Err(Error::Data("cannot build a classification loss from an empty sample".into()));
    }
    let indices: Vec<usize> = sample.entries.iter().map(|e| e.anchor).collect();
    let targets: Vec<f64> = sample.entries.iter().map(|e| if e.positive { 1.0 } else { 0.0 }).collect();
    let divisor = match norm {
        LossNorm::Mean => sample.len() as f64,
        LossNorm::PaperSums => 1.0,
    };
    tape.record(Box::new(SelectBceOp { indices, targets, divisor }), &[cls_prob])
}

/// Records the box regression term over the positive samples: mean over
/// positives (or sum) of the four-coordinate smooth-L1 residual against the
/// encoded targets. Returns `None` when the sample holds no positives.
pub fn bbox_loss_on_tape<S: Scalar>(
    tape: &mut Tape<S>,
    bbox_delta: ValueId,
    sample: &SampleSet,
    anchors_per_cell: usize,
    norm: LossNorm,
) -> Result<Option<ValueId>> {
    if anchors_per_cell == 0 {
        return Err(Error::Usage("anchors_per_cell must be >= 1".into()));
    }
    let mut indices = Vec::new();
    let mut targets = Vec::new();
    let mut n_pos = 0usize;
    for entry in &sample.entries {
        if !entry.positive {
            continue;
        }
        let target = entry.target.ok_or_else(|| {
            Error::Usage(format!("positive sample for anchor {} has no target", entry.anchor))
        })?;
        let cell = entry.anchor / anchors_per_cell;
        let a = entry.anchor % anchors_per_cell;
        let base = cell * 4 * anchors_per_cell + a * 4;
        for (j, &t) in target.iter().enumerate() {
            indices.push(base + j);
            targets.push(t);
        }
        n_pos += 1;
    }
    if n_pos == 0 {
        return Ok(None);
    }
    let divisor = match norm {
        LossNorm::Mean => n_pos as f64,
        LossNorm::PaperSums => 1.0,
    };
    tape.record(Box::new(SelectSmoothL1Op { indices, targets, divisor }), &[bbox_delta])
        .map(Some)
}

/// Records the detection term `cls + lambda_bb * bbox` for a sample.
pub fn detection_loss_on_tape<S: Scalar>(
    tape: &mut Tape<S>,
    cls_prob: ValueId,
    bbox_delta: ValueId,
    sample: &SampleSet,
    anchors_per_cell: usize,
    lambda_bb: f64,
    norm: LossNorm,
) -> Result<ValueId> {
    let cls = cls_loss_on_tape(tape, cls_prob, sample, norm)?;
    match bbox_loss_on_tape(tape, bbox_delta, sample, anchors_per_cell, norm)? {
        Some(bbox) => tape.record(
            Box::new(AffineCombineOp { coeffs: vec![1.0, lambda_bb] }),
            &[cls, bbox],
        ),
        None => Ok(cls),
    }
}

/// Records the illumination term `-ln w_label` on the `[2]` weight vector.
pub fn illumination_loss_on_tape<S: Scalar>(
    tape: &mut Tape<S>,
    weights: ValueId,
    label: Illumination,
) -> Result<ValueId> {
    let index = match label {
        Illumination::Day => 0,
        Illumination::Night => 1,
    };
    tape.record(Box::new(SelectNllOp { index }), &[weights])
}

/// Records the segmentation term: for each supervised stream, the mean (or
/// sum) of clamped BCE over non-excluded cells, then the sum across
/// streams. Returns `None` when there are no streams or no supervised
/// cells.
pub fn seg_loss_on_tape<S: Scalar>(
    tape: &mut Tape<S>,
    seg_probs: &[(String, ValueId)],
    targets: &SegTargets,
    norm: LossNorm,
) -> Result<Option<ValueId>> {
    if seg_probs.is_empty() {
        return Ok(None);
    }
    let mut indices = Vec::new();
    let mut cell_targets = Vec::new();
    for y in 0..targets.grid_h {
        for x in 0..targets.grid_w {
            match targets.at(y, x) {
                CellTarget::Pos => {
                    indices.push(y * targets.grid_w + x);
                    cell_targets.push(1.0);
                }
                CellTarget::Neg => {
                    indices.push(y * targets.grid_w + x);
                    cell_targets.push(0.0);
                }
                CellTarget::Excluded => {}
            }
        }
    }
    if indices.is_empty() {
        return Ok(None);
    }
    let divisor = match norm {
        LossNorm::Mean => indices.len() as f64,
        LossNorm::PaperSums => 1.0,
    };
    let mut stream_losses = Vec::new();
    for (slot, prob) in seg_probs {
        let expected = [targets.grid_h, targets.grid_w, 1];
        if tape.value(*prob).shape() != expected {
            return Err(Error::Shape(format!(
                "segmentation stream {slot:?} has shape {:?}, targets need {expected:?}",
                tape.value(*prob).shape()
            )));
        }
        stream_losses.push(tape.record(
            Box::new(SelectBceOp {
                indices: indices.clone(),
                targets: cell_targets.clone(),
                divisor,
            }),
            &[*prob],
        )?);
    }
    if stream_losses.len() == 1 {
        Ok(Some(stream_losses[0]))
    } else {
        tape.record(
            Box::new(AffineCombineOp { coeffs: vec![1.0; stream_losses.len()] }),
            &stream_losses,
        )
        .map(Some)
    }
}

/// Tape ids of the assembled loss terms for one frame.
#[derive(Clone, Copy, Debug)]
pub struct LossIds {
    pub total: ValueId,
    pub l_d: ValueId,
    pub l_i: Option<ValueId>,
    pub l_s: Option<ValueId>,
    pub l_cls: ValueId,
    pub l_bbox: Option<ValueId>,
}

/// Assembles the full multi-task loss on the tape:
/// `total = L_D + lambda_ia * L_I + lambda_sm * L_S`, where the
/// illumination term exists only for variants with the illumination
/// predictor and the segmentation term only for variants with supervised
/// segmentation streams. Absent terms contribute exactly zero.
#[allow(clippy::too_many_arguments)]
pub fn assemble_loss<S: Scalar>(
    tape: &mut Tape<S>,
    traced: &TracedOutputs,
    sample: &SampleSet,
    anchors_per_cell: usize,
    seg_targets: Option<&SegTargets>,
    label: Illumination,
    lambda_bb: f64,
    lambda_ia: f64,
    lambda_sm: f64,
    norm: LossNorm,
) -> Result<LossIds> {
    let l_cls = cls_loss_on_tape(tape, traced.cls_prob, sample, norm)?;
    let l_bbox = bbox_loss_on_tape(tape, traced.bbox_delta, sample, anchors_per_cell, norm)?;
    let l_d = match l_bbox {
        Some(bbox) => tape.record(
            Box::new(AffineCombineOp { coeffs: vec![1.0, lambda_bb] }),
            &[l_cls, bbox],
        )?,
        None => l_cls,
    };

    let l_i = match traced.illum_weights {
        Some(weights) => Some(illumination_loss_on_tape(tape, weights, label)?),
        None => None,
    };

    let l_s = match seg_targets {
        Some(targets) if !traced.seg_probs.is_empty() => {
            seg_loss_on_tape(tape, &traced.seg_probs, targets, norm)?
        }
        _ => None,
    };

    let mut ids = vec![l_d];
    let mut coeffs = vec![1.0];
    if let Some(i) = l_i {
        ids.push(i);
        coeffs.push(lambda_ia);
    }
    if let Some(s) = l_s {
        ids.push(s);
        coeffs.push(lambda_sm);
    }
    let total = if ids.len() == 1 {
        l_d
    } else {
        tape.record(Box::new(AffineCombineOp { coeffs }), &ids)?
    };
    Ok(LossIds { total, l_d, l_i, l_s, l_cls, l_bbox })
}

impl LossIds {
    /// Reads the concrete loss values off the tape as a [`LossBreakdown`].
    /// `total` is recomputed in f64 from the parts so the additivity
    /// identity is exact regardless of tape precision.
    pub fn breakdown<S: Scalar>(
        &self,
        tape: &Tape<S>,
        lambda_ia: f64,
        lambda_sm: f64,
    ) -> LossBreakdown {
        let scalar = |id: ValueId| tape.value(id).data()[0].widen();
        let l_d = scalar(self.l_d);
        let l_i = self.l_i.map_or(0.0, scalar);
        let l_s = self.l_s.map_or(0.0, scalar);
        LossBreakdown {
            l_i,
            l_d,
            l_s,
            l_cls: scalar(self.l_cls),
            l_bbox: self.l_bbox.map_or(0.0, scalar),
            total: l_d + lambda_ia * l_i + lambda_sm * l_s,
        }
    }
}
