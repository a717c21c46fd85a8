//! Floating-point abstraction used by every numeric kernel.
//!
//! The full pipeline is generic over [`Scalar`] so the same code runs in
//! `f32` (the default precision for data, models, and training) and in
//! `f64` (used by the gradient checker, where finite differences need the
//! extra headroom).

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, NumAssign};

/// A real scalar type the numeric kernels can be instantiated with.
///
/// Implemented for `f32` and `f64`. The supertraits cover arithmetic,
/// assignment operators, summation, conversions, and the thread-safety
/// bounds needed to move tensors across threads.
pub trait Scalar:
    Float + NumAssign + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` constant into this scalar type, rounding if needed.
    fn from_f64(v: f64) -> Self;

    /// Widens this value to `f64` (exact for both supported types).
    fn widen(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn widen(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }

    #[inline]
    fn widen(self) -> f64 {
        self
    }
}
