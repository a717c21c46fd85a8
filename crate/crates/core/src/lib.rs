//! Illumination-aware multispectral pedestrian detection, desk scale.
//!
//! The crate is organized around one pipeline:
//!
//! * [`numerics`] — tensors, layer kernels, a reverse-mode autodiff tape,
//!   and a finite-difference gradient checker;
//! * [`dataio`] — a synthetic paired visible/thermal dataset generator with
//!   on-disk persistence;
//! * [`netgraph`] — the two-stream detection network, its illumination
//!   predictor, detection heads, segmentation variants, and checkpoints;
//! * [`training`] — anchor machinery, the loss terms, SGD, and the
//!   training loop;
//! * [`evaluation`] — matching, miss-rate/FPPI curves, and model
//!   evaluation reports.

pub mod boxes;
pub mod error;
pub mod dataio;
pub mod evaluation;
pub mod netgraph;
pub mod numerics;
pub mod training;

pub use boxes::BBox;
pub use error::{Error, Result};
pub use numerics::{Scalar, Tensor};
