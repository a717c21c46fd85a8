//! Numeric foundation: tensors, layer kernels, the autodiff tape, and the
//! finite-difference gradient checker.

pub mod gradcheck;
pub mod layers;
pub mod scalar;
pub mod tape;
pub mod tensor;

pub use gradcheck::{grad_check, relative_error, GradCheckOptions, GradCheckReport};
pub use layers::{apply_layer, backward_layer, sigmoid_scalar, LayerSpec};
pub use scalar::Scalar;
pub use tape::{Gradients, Tape, TapeOp, ValueId};
pub use tensor::Tensor;
