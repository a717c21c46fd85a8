//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Values live in an arena owned by the [`Tape`] and are referred to by
//! [`ValueId`]. Each recorded operation implements [`TapeOp`]; the backward
//! sweep walks the tape in reverse, calling each op's `backward` with the
//! original inputs, the recorded output, and the accumulated upstream
//! gradient. Entries are pure: recording and replaying never mutates earlier
//! values.

use std::fmt::Debug;

use crate::error::{Error, Result};
use crate::numerics::layers::{apply_layer, backward_layer, LayerSpec};
use crate::numerics::scalar::Scalar;
use crate::numerics::tensor::Tensor;

/// Handle to a value stored on a tape.
///
/// Ids are only meaningful for the tape that produced them; using an id from
/// a different (or cleared) tape is reported as a usage error where it can be
/// detected, and panics on out-of-range access otherwise.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct ValueId(pub(crate) usize);

impl ValueId {
    /// Position in the tape's value arena.
    pub fn index(self) -> usize {
        self.0
    }
}

/// A differentiable operation that can be recorded on a tape.
///
/// `forward` consumes input tensors and produces one output tensor.
/// `backward` receives the same inputs, the recorded output, and the
/// gradient of the final objective with respect to the output; it returns
/// one gradient per input, in input order, each matching its input's shape.
pub trait TapeOp<S: Scalar>: Debug {
    /// Short name used in error messages.
    fn name(&self) -> &str;

    /// Computes the operation's output from its inputs.
    fn forward(&self, inputs: &[&Tensor<S>]) -> Result<Tensor<S>>;

    /// Computes input gradients given the upstream gradient.
    fn backward(
        &self,
        inputs: &[&Tensor<S>],
        output: &Tensor<S>,
        grad_out: &Tensor<S>,
    ) -> Result<Vec<Tensor<S>>>;
}

/// [`TapeOp`] adapter for the layer vocabulary. The recorded inputs are the
/// layer's data inputs followed by its parameter tensors.
#[derive(Debug)]
struct LayerOp {
    spec: LayerSpec,
    n_data_inputs: usize,
}

impl<S: Scalar> TapeOp<S> for LayerOp {
    fn name(&self) -> &str {
        self.spec.kind()
    }

    fn forward(&self, inputs: &[&Tensor<S>]) -> Result<Tensor<S>> {
        let (data, params) = inputs.split_at(self.n_data_inputs);
        apply_layer(&self.spec, data, params)
    }

    fn backward(
        &self,
        inputs: &[&Tensor<S>],
        output: &Tensor<S>,
        grad_out: &Tensor<S>,
    ) -> Result<Vec<Tensor<S>>> {
        let (data, params) = inputs.split_at(self.n_data_inputs);
        let (mut dx, dp) = backward_layer(&self.spec, data, params, output, grad_out)?;
        dx.extend(dp);
        Ok(dx)
    }
}

struct Entry<S: Scalar> {
    op: Box<dyn TapeOp<S>>,
    inputs: Vec<ValueId>,
    output: ValueId,
}

/// A Wengert list: leaves plus recorded operations, in execution order.
pub struct Tape<S: Scalar> {
    values: Vec<Tensor<S>>,
    entries: Vec<Entry<S>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    /// An empty tape.
    pub fn new() -> Self {
        Tape { values: Vec::new(), entries: Vec::new() }
    }

    /// Adds a leaf value (an input or a parameter) to the tape.
    ///
    /// The tensor must be finite; leaves have no producing operation and
    /// receive gradients only through accumulation.
    pub fn leaf(&mut self, value: Tensor<S>) -> Result<ValueId> {
        value.ensure_finite("tape leaf")?;
        let id = ValueId(self.values.len());
        self.values.push(value);
        Ok(id)
    }

    /// Records an operation: runs its forward pass on the given inputs and
    /// stores the result as a new value.
    ///
    /// A non-finite forward result is rejected with a numeric-domain error
    /// and nothing is recorded.
    pub fn record(&mut self, op: Box<dyn TapeOp<S>>, inputs: &[ValueId]) -> Result<ValueId> {
        let input_refs = self.gather(inputs)?;
        let out = op.forward(&input_refs)?;
        out.ensure_finite(op.name())?;
        let id = ValueId(self.values.len());
        self.values.push(out);
        self.entries.push(Entry { op, inputs: inputs.to_vec(), output: id });
        Ok(id)
    }

    /// Records a layer application; `params` follow the data inputs on the
    /// recorded entry so their gradients flow like any other input.
    pub fn apply_layer(
        &mut self,
        spec: &LayerSpec,
        inputs: &[ValueId],
        params: &[ValueId],
    ) -> Result<ValueId> {
        let mut all = inputs.to_vec();
        all.extend_from_slice(params);
        let op = LayerOp { spec: spec.clone(), n_data_inputs: inputs.len() };
        self.record(Box::new(op), &all)
    }

    /// The tensor stored for `id`.
    ///
    /// Panics if `id` is out of range for this tape (an id from another
    /// tape); this is a programming error, not a recoverable condition.
    pub fn value(&self, id: ValueId) -> &Tensor<S> {
        &self.values[id.0]
    }

    /// Number of values (leaves and op outputs) on the tape.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// True when the tape holds no values.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn gather(&self, ids: &[ValueId]) -> Result<Vec<&Tensor<S>>> {
        ids.iter()
            .map(|id| {
                self.values.get(id.0).ok_or_else(|| {
                    Error::Usage(format!(
                        "value id {} is not on this tape (len {})",
                        id.0,
                        self.values.len()
                    ))
                })
            })
            .collect()
    }

    /// Runs the backward sweep from `output`, seeding it with `seed`.
    ///
    /// `seed` must match the output's shape. Returns the accumulated
    /// gradients for every value on the tape; values the output does not
    /// depend on simply have no gradient (reported as zeros by
    /// [`Gradients::grad_or_zeros`]).
    pub fn backprop(&self, output: ValueId, seed: &Tensor<S>) -> Result<Gradients<S>> {
        if output.0 >= self.values.len() {
            return Err(Error::Usage(format!(
                "backprop output id {} is not on this tape (len {})",
                output.0,
                self.values.len()
            )));
        }
        if seed.shape() != self.value(output).shape() {
            return Err(Error::Shape(format!(
                "backprop seed shape {:?} does not match output shape {:?}",
                seed.shape(),
                self.value(output).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<S>>> = vec![None; self.values.len()];
        grads[output.0] = Some(seed.clone());
        for entry in self.entries.iter().rev() {
            let Some(grad_out) = grads[entry.output.0].clone() else {
                continue;
            };
            let input_refs: Vec<&Tensor<S>> =
                entry.inputs.iter().map(|id| &self.values[id.0]).collect();
            let input_grads =
                entry
                    .op
                    .backward(&input_refs, &self.values[entry.output.0], &grad_out)?;
            if input_grads.len() != entry.inputs.len() {
                return Err(Error::Usage(format!(
                    "op {} returned {} gradients for {} inputs",
                    entry.op.name(),
                    input_grads.len(),
                    entry.inputs.len()
                )));
            }
            for (id, g) in entry.inputs.iter().zip(input_grads) {
                g.ensure_finite(entry.op.name())?;
                match &mut grads[id.0] {
                    Some(acc) => acc.add_assign(&g)?,
                    slot @ None => *slot = Some(g),
                }
            }
        }
        let shapes = self.values.iter().map(|v| v.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }

    /// Convenience for scalar objectives: seeds the backward sweep with 1.
    pub fn backprop_scalar(&self, output: ValueId) -> Result<Gradients<S>> {
        if output.0 >= self.values.len() {
            return Err(Error::Usage(format!(
                "backprop output id {} is not on this tape (len {})",
                output.0,
                self.values.len()
            )));
        }
        if !self.value(output).is_scalar() {
            return Err(Error::Usage(format!(
                "backprop_scalar requires a scalar output, got shape {:?}",
                self.value(output).shape()
            )));
        }
        let seed = Tensor::filled(self.value(output).shape().to_vec(), S::one());
        self.backprop(output, &seed)
    }

    /// Drops all values and entries, keeping allocated capacity.
    pub fn clear(&mut self) {
        self.values.clear();
        self.entries.clear();
    }
}

/// Result of a backward sweep: one optional gradient per tape value.
#[derive(Debug)]
pub struct Gradients<S: Scalar> {
    grads: Vec<Option<Tensor<S>>>,
    shapes: Vec<Vec<usize>>,
}

impl<S: Scalar> Gradients<S> {
    /// The gradient for `id`, or `None` if the objective does not depend
    /// on it.
    pub fn grad(&self, id: ValueId) -> Option<&Tensor<S>> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// The gradient for `id`, materializing zeros for unreached values.
    pub fn grad_or_zeros(&self, id: ValueId) -> Tensor<S> {
        match self.grads.get(id.0) {
            Some(Some(g)) => g.clone(),
            Some(None) => Tensor::zeros(self.shapes[id.0].clone()),
            None => Tensor::zeros(vec![0]),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// y = sum(w .* x), used to exercise custom ops.
    #[derive(Debug)]
    struct DotOp;

    impl<S: Scalar> TapeOp<S> for DotOp {
        fn name(&self) -> &str {
            "dot"
        }

        fn forward(&self, inputs: &[&Tensor<S>]) -> Result<Tensor<S>> {
            let s: S = inputs[0]
                .data()
                .iter()
                .zip(inputs[1].data())
                .map(|(&a, &b)| a * b)
                .sum();
            Ok(Tensor::scalar(s))
        }

        fn backward(
            &self,
            inputs: &[&Tensor<S>],
            _output: &Tensor<S>,
            grad_out: &Tensor<S>,
        ) -> Result<Vec<Tensor<S>>> {
            let g = grad_out.item()?;
            let mut da = inputs[1].clone();
            da.scale(g);
            let mut db = inputs[0].clone();
            db.scale(g);
            Ok(vec![da, db])
        }
    }

    #[test]
    fn dot_gradients_flow_to_both_leaves() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::from_vec(vec![3], vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
        let b = tape.leaf(Tensor::from_vec(vec![3], vec![4.0, 5.0, 6.0]).unwrap()).unwrap();
        let y = tape.record(Box::new(DotOp), &[a, b]).unwrap();
        assert_eq!(tape.value(y).item().unwrap(), 32.0);
        let grads = tape.backprop_scalar(y).unwrap();
        assert_eq!(grads.grad(a).unwrap().data(), &[4.0, 5.0, 6.0]);
        assert_eq!(grads.grad(b).unwrap().data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn reused_value_accumulates_gradient() {
        // y = dot(x, x) => dy/dx = 2x.
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_vec(vec![2], vec![3.0, -1.0]).unwrap()).unwrap();
        let y = tape.record(Box::new(DotOp), &[x, x]).unwrap();
        assert_eq!(tape.value(y).item().unwrap(), 10.0);
        let grads = tape.backprop_scalar(y).unwrap();
        assert_eq!(grads.grad(x).unwrap().data(), &[6.0, -2.0]);
    }

    #[test]
    fn unreached_values_have_zero_gradient() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::from_vec(vec![2], vec![1.0, 2.0]).unwrap()).unwrap();
        let b = tape.leaf(Tensor::from_vec(vec![2], vec![5.0, 5.0]).unwrap()).unwrap();
        let unused = tape.leaf(Tensor::from_vec(vec![4], vec![9.0; 4]).unwrap()).unwrap();
        let y = tape.record(Box::new(DotOp), &[a, b]).unwrap();
        let grads = tape.backprop_scalar(y).unwrap();
        assert!(grads.grad(unused).is_none());
        let z = grads.grad_or_zeros(unused);
        assert_eq!(z.shape(), &[4]);
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn foreign_id_is_a_usage_error() {
        let mut other = Tape::<f64>::new();
        let foreign = other.leaf(Tensor::scalar(1.0)).unwrap();
        let _ = other.leaf(Tensor::scalar(2.0)).unwrap();

        let mut tape = Tape::<f64>::new();
        let err = tape.record(Box::new(DotOp), &[ValueId(5), foreign]).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
        let err = tape.backprop_scalar(ValueId(3)).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }

    #[test]
    fn non_finite_forward_is_rejected() {
        /// Produces 1/x, which blows up at x = 0.
        #[derive(Debug)]
        struct InvOp;
        impl TapeOp<f64> for InvOp {
            fn name(&self) -> &str {
                "inv"
            }
            fn forward(&self, inputs: &[&Tensor<f64>]) -> Result<Tensor<f64>> {
                let mut t = Tensor::zeros(inputs[0].shape().to_vec());
                for (o, &x) in t.data_mut().iter_mut().zip(inputs[0].data()) {
                    *o = 1.0 / x;
                }
                Ok(t)
            }
            fn backward(
                &self,
                _inputs: &[&Tensor<f64>],
                _output: &Tensor<f64>,
                _grad_out: &Tensor<f64>,
            ) -> Result<Vec<Tensor<f64>>> {
                unreachable!("forward never succeeds in this test")
            }
        }
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_vec(vec![2], vec![2.0, 0.0]).unwrap()).unwrap();
        let before = tape.len();
        let err = tape.record(Box::new(InvOp), &[x]).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
        // Nothing was recorded by the failed op.
        assert_eq!(tape.len(), before);
    }

    #[test]
    fn seed_shape_must_match_output() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::from_vec(vec![2], vec![1.0, 2.0]).unwrap()).unwrap();
        let y = tape.record(Box::new(DotOp), &[a, a]).unwrap();
        let bad_seed = Tensor::<f64>::zeros(vec![2]);
        assert!(matches!(tape.backprop(y, &bad_seed), Err(Error::Shape(_))));
    }
}
