//! Training machinery: anchor generation and label assignment, the loss
//! terms, the SGD optimizer, and the training loop.

pub mod anchors;
pub mod losses;
pub mod sgd;
pub mod trainer;
pub mod verify;

pub use anchors::{
    assign_anchor_labels, decode_box, default_templates, encode_box, generate_anchors,
    sample_minibatch, AnchorAssignment, AnchorGrid, AnchorLabel, AnchorTemplate, SampleEntry,
    SampleSet,
};
pub use losses::{
    assemble_loss, bce_loss, illumination_nll, smooth_l1, smooth_l1_grad, LossBreakdown, LossIds,
    LossNorm,
};
pub use sgd::{global_grad_norm, sgd_step, SgdConfig, SgdState};
pub use trainer::{train, train_with_observer, TrainConfig, TrainEvent};
pub use verify::check_loss_gradients;
