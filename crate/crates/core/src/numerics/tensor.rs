//! Dense row-major tensors with explicit shapes.

use crate::error::{Error, Result};
use crate::numerics::scalar::Scalar;

/// A dense tensor stored in row-major order.
///
/// The last axis varies fastest. Feature maps use `[height, width, channels]`,
/// fully-connected weights use `[in_features, out_features]`, and convolution
/// weights use `[kh, kw, in_channels, out_channels]`. Scalars are tensors of
/// shape `[1]`.
///
/// Every value entering a tensor through a checked constructor is finite;
/// operations that could produce non-finite values re-check at their
/// boundaries.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S: Scalar = f32> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    /// Builds a tensor from a shape and matching data vector.
    ///
    /// Fails if the shape product does not equal the data length or if any
    /// value is non-finite.
    pub fn from_vec(shape: impl Into<Vec<usize>>, data: Vec<S>) -> Result<Self> {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} implies {} elements but {} were provided",
                shape,
                numel,
                data.len()
            )));
        }
        let t = Tensor { shape, data };
        t.ensure_finite("tensor construction")?;
        Ok(t)
    }

    /// A tensor of the given shape filled with zeros.
    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        Tensor { shape, data: vec![S::zero(); numel] }
    }

    /// A tensor of the given shape with every element set to `value`.
    pub fn filled(shape: impl Into<Vec<usize>>, value: S) -> Self {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        Tensor { shape, data: vec![value; numel] }
    }

    /// A scalar tensor (shape `[1]`).
    pub fn scalar(value: S) -> Self {
        Tensor { shape: vec![1], data: vec![value] }
    }

    /// Builds a tensor by evaluating `f` at each flat index.
    pub fn from_fn(shape: impl Into<Vec<usize>>, mut f: impl FnMut(usize) -> S) -> Self {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        let data = (0..numel).map(|i| f(i)).collect();
        Tensor { shape, data }
    }

    /// The tensor's shape.
    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Total number of elements.
    #[inline]
    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// True when the tensor holds exactly one element.
    #[inline]
    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The single element of a scalar tensor.
    pub fn item(&self) -> Result<S> {
        if self.is_scalar() {
            Ok(self.data[0])
        } else {
            Err(Error::Shape(format!(
                "expected a scalar tensor, got shape {:?}",
                self.shape
            )))
        }
    }

    /// Read-only view of the underlying storage.
    #[inline]
    pub fn data(&self) -> &[S] {
        &self.data
    }

    /// Mutable view of the underlying storage.
    #[inline]
    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    /// Interprets the shape as `[h, w, c]`, failing otherwise.
    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [h, w, c] => Ok((h, w, c)),
            _ => Err(Error::Shape(format!(
                "expected a rank-3 [h, w, c] tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    /// Flat offset of `(y, x, c)` in a `[h, w, c]` tensor. No bounds checks
    /// beyond the debug assertions; callers validate shapes first.
    #[inline]
    pub fn offset3(&self, y: usize, x: usize, c: usize) -> usize {
        debug_assert_eq!(self.shape.len(), 3);
        debug_assert!(y < self.shape[0] && x < self.shape[1] && c < self.shape[2]);
        (y * self.shape[1] + x) * self.shape[2] + c
    }

    /// Value at `(y, x, c)` in a `[h, w, c]` tensor.
    #[inline]
    pub fn at3(&self, y: usize, x: usize, c: usize) -> S {
        self.data[self.offset3(y, x, c)]
    }

    /// Returns a copy with the same data reinterpreted under a new shape of
    /// equal element count.
    pub fn reshaped(&self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        if numel != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} ({} elements) to {:?} ({} elements)",
                self.shape,
                self.data.len(),
                shape,
                numel
            )));
        }
        Ok(Tensor { shape, data: self.data.clone() })
    }

    /// True when every element is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Errors with a numeric-domain message naming `context` when any element
    /// is non-finite.
    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        if self.all_finite() {
            Ok(())
        } else {
            Err(Error::Numeric(format!(
                "non-finite value encountered in {} (shape {:?})",
                context, self.shape
            )))
        }
    }

    /// Elementwise in-place addition; shapes must match exactly.
    pub fn add_assign(&mut self, other: &Tensor<S>) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "cannot add tensors of shapes {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += *b;
        }
        Ok(())
    }

    /// Multiplies every element by `factor` in place.
    pub fn scale(&mut self, factor: S) {
        for v in self.data.iter_mut() {
            *v *= factor;
        }
    }

    /// Converts element precision (e.g. `f32` model to `f64` for checking).
    pub fn to_precision<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| T::from_f64(v.widen())).collect(),
        }
    }

    /// Mean of all elements; zero for an empty tensor.
    pub fn mean(&self) -> S {
        if self.data.is_empty() {
            S::zero()
        } else {
            let sum: S = self.data.iter().copied().sum();
            sum / S::from_f64(self.data.len() as f64)
        }
    }
}
