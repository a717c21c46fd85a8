//! Stochastic gradient descent with momentum, weight decay, and global
//! gradient-norm clipping.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor};

/// One step's optimizer hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Global L2 clipping threshold; `f64::INFINITY` disables clipping.
    pub clip_norm: f64,
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!(
                "weight_decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Config(format!("clip_norm must be positive, got {}", self.clip_norm)));
        }
        Ok(())
    }
}

/// Per-parameter momentum buffers, created lazily at zero.
#[derive(Clone, Debug, Default)]
pub struct SgdState<S: Scalar = f32> {
    velocity: BTreeMap<String, Tensor<S>>,
}

impl<S: Scalar> SgdState<S> {
    pub fn new() -> Self {
        SgdState { velocity: BTreeMap::new() }
    }

    /// The current velocity buffer for a parameter, if one exists yet.
    pub fn velocity(&self, name: &str) -> Option<&Tensor<S>> {
        self.velocity.get(name)
    }
}

/// The global L2 norm over all gradient tensors, accumulated in f64.
pub fn global_grad_norm<S: Scalar>(grads: &BTreeMap<String, Tensor<S>>) -> f64 {
    let mut sum = 0.0f64;
    for g in grads.values() {
        for &v in g.data() {
            let w = v.widen();
            sum += w * w;
        }
    }
    sum.sqrt()
}

/// Applies one SGD step in place.
///
/// First the global gradient L2 norm is computed; if it exceeds
/// `clip_norm`, every gradient is scaled by `clip_norm / norm`. Then, per
/// parameter: `g' = g + weight_decay * p`, `v <- momentum * v -
/// learning_rate * g'`, `p <- p + v`.
///
/// `grads` must be keyed exactly like `params`; a missing or extra key is a
/// usage error.
pub fn sgd_step<S: Scalar>(
    params: &mut BTreeMap<String, Tensor<S>>,
    grads: &BTreeMap<String, Tensor<S>>,
    state: &mut SgdState<S>,
    config: &SgdConfig,
) -> Result<()> {
    config.validate()?;
    for name in params.keys() {
        if !grads.contains_key(name) {
            return Err(Error::Usage(format!("no gradient supplied for parameter {name:?}")));
        }
    }
    for name in grads.keys() {
        if !params.contains_key(name) {
            return Err(Error::Usage(format!("gradient for unknown parameter {name:?}")));
        }
    }

    let norm = global_grad_norm(grads);
    if !norm.is_finite() {
        return Err(Error::Numeric(format!("gradient norm is not finite ({norm})")));
    }
    let scale = if norm > config.clip_norm { config.clip_norm / norm } else { 1.0 };

    let scale_s = S::from_f64(scale);
    let wd = S::from_f64(config.weight_decay);
    let momentum = S::from_f64(config.momentum);
    let lr = S::from_f64(config.learning_rate);

    for (name, param) in params.iter_mut() {
        let grad = &grads[name];
        if grad.shape() != param.shape() {
            return Err(Error::Shape(format!(
                "gradient for {name:?} has shape {:?}, parameter has {:?}",
                grad.shape(),
                param.shape()
            )));
        }
        let velocity = state
            .velocity
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(param.shape().to_vec()));
        if velocity.shape() != param.shape() {
            return Err(Error::Shape(format!(
                "velocity for {name:?} has shape {:?}, parameter has {:?}",
                velocity.shape(),
                param.shape()
            )));
        }
        let p = param.data_mut();
        let g = grad.data();
        let v = velocity.data_mut();
        for i in 0..p.len() {
            let adjusted = g[i] * scale_s + wd * p[i];
            v[i] = momentum * v[i] - lr * adjusted;
            p[i] += v[i];
        }
        param.ensure_finite(name)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_param(value: f64) -> BTreeMap<String, Tensor<f64>> {
        let mut m = BTreeMap::new();
        m.insert("w".to_string(), Tensor::from_vec(vec![1], vec![value]).unwrap());
        m
    }

    fn single_grad(value: f64) -> BTreeMap<String, Tensor<f64>> {
        single_param(value)
    }

    #[test]
    fn decay_only_step() {
        // param 1.0, grad 0, lr 0.1, wd 0.5, momentum 0 -> 0.95.
        let mut params = single_param(1.0);
        let mut state = SgdState::new();
        let cfg = SgdConfig { learning_rate: 0.1, momentum: 0.0, weight_decay: 0.5, clip_norm: 10.0 };
        sgd_step(&mut params, &single_grad(0.0), &mut state, &cfg).unwrap();
        assert!((params["w"].data()[0] - 0.95).abs() < 1e-12);
    }

    #[test]
    fn momentum_accumulates_over_steps() {
        // Constant grad 1, lr 0.1, momentum 0.9: steps -0.1 then -0.19.
        let mut params = single_param(0.0);
        let mut state = SgdState::new();
        let cfg = SgdConfig { learning_rate: 0.1, momentum: 0.9, weight_decay: 0.0, clip_norm: 100.0 };
        sgd_step(&mut params, &single_grad(1.0), &mut state, &cfg).unwrap();
        assert!((params["w"].data()[0] - -0.1).abs() < 1e-12);
        sgd_step(&mut params, &single_grad(1.0), &mut state, &cfg).unwrap();
        assert!((params["w"].data()[0] - -0.29).abs() < 1e-12);
    }

    #[test]
    fn clipping_rescales_the_whole_gradient() {
        // Two tensors with norm sqrt(12^2 + 16^2) = 20, clip 10: halved.
        let mut params = BTreeMap::new();
        params.insert("a".to_string(), Tensor::from_vec(vec![1], vec![0.0f64]).unwrap());
        params.insert("b".to_string(), Tensor::from_vec(vec![1], vec![0.0f64]).unwrap());
        let mut grads = BTreeMap::new();
        grads.insert("a".to_string(), Tensor::from_vec(vec![1], vec![12.0f64]).unwrap());
        grads.insert("b".to_string(), Tensor::from_vec(vec![1], vec![16.0f64]).unwrap());
        assert!((global_grad_norm(&grads) - 20.0).abs() < 1e-12);

        let mut state = SgdState::new();
        let cfg = SgdConfig { learning_rate: 1.0, momentum: 0.0, weight_decay: 0.0, clip_norm: 10.0 };
        sgd_step(&mut params, &grads, &mut state, &cfg).unwrap();
        assert!((params["a"].data()[0] - -6.0).abs() < 1e-12);
        assert!((params["b"].data()[0] - -8.0).abs() < 1e-12);
    }

    #[test]
    fn below_threshold_gradients_are_untouched() {
        let mut params = single_param(0.0);
        let mut state = SgdState::new();
        let cfg = SgdConfig { learning_rate: 1.0, momentum: 0.0, weight_decay: 0.0, clip_norm: 10.0 };
        sgd_step(&mut params, &single_grad(3.0), &mut state, &cfg).unwrap();
        assert!((params["w"].data()[0] - -3.0).abs() < 1e-12);
    }

    #[test]
    fn clipping_happens_before_weight_decay() {
        // grad 20 clipped to 10, then wd 0.1 * param 5.0 added: g' = 10.5.
        let mut params = single_param(5.0);
        let mut state = SgdState::new();
        let cfg = SgdConfig { learning_rate: 1.0, momentum: 0.0, weight_decay: 0.1, clip_norm: 10.0 };
        sgd_step(&mut params, &single_grad(20.0), &mut state, &cfg).unwrap();
        assert!((params["w"].data()[0] - (5.0 - 10.5)).abs() < 1e-12);
    }

    #[test]
    fn mismatched_keys_are_usage_errors() {
        let mut params = single_param(1.0);
        let mut state = SgdState::new();
        let cfg = SgdConfig { learning_rate: 0.1, momentum: 0.0, weight_decay: 0.0, clip_norm: 10.0 };
        let empty: BTreeMap<String, Tensor<f64>> = BTreeMap::new();
        assert!(matches!(
            sgd_step(&mut params, &empty, &mut state, &cfg),
            Err(Error::Usage(_))
        ));

        let mut extra = single_grad(0.0);
        extra.insert("stray".into(), Tensor::from_vec(vec![1], vec![0.0]).unwrap());
        assert!(matches!(
            sgd_step(&mut params, &extra, &mut state, &cfg),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn invalid_hyperparameters_are_rejected() {
        let mut params = single_param(1.0);
        let mut state = SgdState::new();
        let bad = SgdConfig { learning_rate: 0.0, momentum: 0.0, weight_decay: 0.0, clip_norm: 10.0 };
        assert!(sgd_step(&mut params, &single_grad(0.0), &mut state, &bad).is_err());
        let bad = SgdConfig { learning_rate: 0.1, momentum: 1.0, weight_decay: 0.0, clip_norm: 10.0 };
        assert!(sgd_step(&mut params, &single_grad(0.0), &mut state, &bad).is_err());
    }
}
