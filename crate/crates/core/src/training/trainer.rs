//! The image-centric training loop: one frame and one anchor minibatch per
//! iteration, with deterministic sampling from a single seeded generator.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{Dataset, SegTargets};
use crate::error::{Error, Result};
use crate::netgraph::forward::{register_params, trace};
use crate::netgraph::network::Network;
use crate::numerics::{Tape, Tensor};
use crate::training::anchors::{
    assign_anchor_labels, generate_anchors, sample_minibatch, AnchorAssignment, AnchorGrid,
};
use crate::training::losses::{assemble_loss, LossBreakdown, LossNorm};
use crate::training::sgd::{sgd_step, SgdConfig, SgdState};

/// Training hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Weight of the box regression term inside the detection loss.
    pub lambda_bb: f64,
    /// Weight of the illumination term in the total loss.
    pub lambda_ia: f64,
    /// Weight of the segmentation term in the total loss.
    pub lambda_sm: f64,
    /// Anchors sampled per image per iteration.
    pub anchors_per_image: usize,
    pub learning_rate: f64,
    /// Multiplier applied to the learning rate every `lr_decay_every`
    /// iterations; 1.0 keeps it constant.
    pub lr_decay: f64,
    /// Decay interval in iterations; 0 disables the schedule.
    pub lr_decay_every: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Global gradient L2 clipping threshold.
    pub clip_norm: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Loss reduction mode.
    pub norm: LossNorm,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda_bb: 5.0,
            lambda_ia: 1.0,
            lambda_sm: 1.0,
            anchors_per_image: 120,
            learning_rate: 0.01,
            lr_decay: 1.0,
            lr_decay_every: 0,
            momentum: 0.9,
            weight_decay: 0.0005,
            clip_norm: 10.0,
            iterations: 1000,
            seed: 0,
            norm: LossNorm::Mean,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_bb", self.lambda_bb),
            ("lambda_ia", self.lambda_ia),
            ("lambda_sm", self.lambda_sm),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be >= 0 and finite, got {v}")));
            }
        }
        if self.anchors_per_image == 0 {
            return Err(Error::Config("anchors_per_image must be >= 1".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config(format!("lr_decay must be in (0, 1], got {}", self.lr_decay)));
        }
        self.sgd_config(0).validate()
    }

    /// The learning rate at a given iteration under the step-decay
    /// schedule.
    pub fn learning_rate_at(&self, iteration: usize) -> f64 {
        if self.lr_decay_every == 0 || self.lr_decay == 1.0 {
            return self.learning_rate;
        }
        let steps = (iteration / self.lr_decay_every) as i32;
        self.learning_rate * self.lr_decay.powi(steps)
    }

    fn sgd_config(&self, iteration: usize) -> SgdConfig {
        SgdConfig {
            learning_rate: self.learning_rate_at(iteration),
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            clip_norm: self.clip_norm,
        }
    }
}

/// Snapshot passed to a training observer after each completed iteration.
pub struct TrainEvent<'a> {
    /// 0-based iteration index.
    pub iteration: usize,
    pub loss: &'a LossBreakdown,
    /// The network state after this iteration's update.
    pub net: &'a Network<f32>,
}

struct FramePlan {
    assignment: AnchorAssignment,
    seg_targets: Option<SegTargets>,
}

/// Trains the network on a dataset.
///
/// Each iteration: pick a frame uniformly, draw an anchor minibatch, run
/// the traced forward pass, assemble the multi-task loss, backpropagate,
/// and apply one SGD step. The returned history has exactly
/// `config.iterations` entries. The whole procedure is deterministic given
/// `config.seed`.
pub fn train(
    dataset: &Dataset,
    net: Network<f32>,
    config: &TrainConfig,
) -> Result<(Network<f32>, Vec<LossBreakdown>)> {
    train_with_observer(dataset, net, config, |_| Ok(()))
}

/// [`train`] with a callback after every iteration (for logging and
/// periodic checkpoints). An observer error aborts training.
pub fn train_with_observer(
    dataset: &Dataset,
    mut net: Network<f32>,
    config: &TrainConfig,
    mut observer: impl FnMut(&TrainEvent<'_>) -> Result<()>,
) -> Result<(Network<f32>, Vec<LossBreakdown>)> {
    config.validate()?;
    net.validate()?;
    dataset.validate()?;
    if dataset.is_empty() {
        return Err(Error::Data("cannot train on an empty dataset".into()));
    }

    let stride = net.config.stride();
    let has_seg = net.config.variant.seg.stream_count() > 0;

    // Anchor labels and segmentation targets depend only on the frame, not
    // on the parameters: compute them once.
    let mut grids: BTreeMap<(usize, usize), AnchorGrid> = BTreeMap::new();
    let mut plans = Vec::with_capacity(dataset.len());
    for frame in &dataset.frames {
        let key = (frame.height(), frame.width());
        if !grids.contains_key(&key) {
            grids.insert(key, generate_anchors(key.0, key.1, stride, &net.config.anchors)?);
        }
        let grid = &grids[&key];
        let assignment = assign_anchor_labels(grid, &frame.annotations)?;
        let seg_targets = if has_seg {
            Some(crate::dataio::rasterize_seg_targets(frame, grid.grid_h, grid.grid_w, stride)?)
        } else {
            None
        };
        plans.push(FramePlan { assignment, seg_targets });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state: SgdState<f32> = SgdState::new();
    let mut history = Vec::with_capacity(config.iterations);
    let anchors_per_cell = net.config.anchors_per_cell();

    for iteration in 0..config.iterations {
        let frame_idx = rng.gen_range(0..dataset.len());
        let frame = &dataset.frames[frame_idx];
        let plan = &plans[frame_idx];
        let sample = sample_minibatch(&plan.assignment, config.anchors_per_image, &mut rng)?;

        let mut tape: Tape<f32> = Tape::new();
        let param_ids = register_params(&mut tape, &net)?;
        let vis = tape.leaf(frame.visible.clone())?;
        let thm = tape.leaf(frame.thermal.clone())?;
        let traced = trace(&mut tape, &net.config, &param_ids, vis, thm)?;
        let loss_ids = assemble_loss(
            &mut tape,
            &traced,
            &sample,
            anchors_per_cell,
            plan.seg_targets.as_ref(),
            frame.illumination,
            config.lambda_bb,
            config.lambda_ia,
            config.lambda_sm,
            config.norm,
        )?;

        let grads = tape.backprop_scalar(loss_ids.total)?;
        let grad_map: BTreeMap<String, Tensor<f32>> = param_ids
            .iter()
            .map(|(name, &id)| (name.clone(), grads.grad_or_zeros(id)))
            .collect();
        sgd_step(&mut net.params, &grad_map, &mut state, &config.sgd_config(iteration))?;

        let breakdown = loss_ids.breakdown(&tape, config.lambda_ia, config.lambda_sm);
        history.push(breakdown);
        observer(&TrainEvent { iteration, loss: &history[iteration], net: &net })?;
    }

    Ok((net, history))
}
