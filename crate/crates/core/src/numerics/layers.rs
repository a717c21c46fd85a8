//! Forward and backward kernels for the layer vocabulary.
//!
//! Feature maps are `[h, w, c]` row-major. Convolution weights are
//! `[kh, kw, in_c, out_c]` with the output channel fastest, so the innermost
//! loops run over contiguous memory. Fully-connected weights are
//! `[in_features, out_features]`.

use crate::error::{Error, Result};
use crate::numerics::scalar::Scalar;
use crate::numerics::tensor::Tensor;

/// One layer kind with its fixed hyperparameters.
///
/// Layers carrying learned parameters (convolution and fully-connected)
/// receive them as separate tensors: `[weight, bias]`.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum LayerSpec {
    /// Zero-padded 2-D convolution over a `[h, w, c]` input.
    Conv2d { kernel: usize, stride: usize, padding: usize, out_channels: usize },
    /// Max pooling with square windows; ties go to the first element in scan
    /// order (row-major over the window).
    MaxPool2d { size: usize, stride: usize },
    /// Dense layer over the flattened input.
    FullyConnected { out_features: usize },
    /// Elementwise `max(x, 0)`; the subgradient at exactly 0 is 0.
    Relu,
    /// Elementwise logistic function, numerically stable in both tails.
    Sigmoid,
    /// Softmax over the whole tensor with max subtraction.
    Softmax,
    /// Concatenates inputs with identical spatial dims along the channel axis.
    ConcatChannels,
    /// Corner-aligned bilinear resampling of a `[h, w, c]` input.
    BilinearResize { out_h: usize, out_w: usize },
}

impl LayerSpec {
    /// Human-readable kind name for error messages and tape traces.
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::MaxPool2d { .. } => "maxpool2d",
            LayerSpec::FullyConnected { .. } => "fullyconnected",
            LayerSpec::Relu => "relu",
            LayerSpec::Sigmoid => "sigmoid",
            LayerSpec::Softmax => "softmax",
            LayerSpec::ConcatChannels => "concat_channels",
            LayerSpec::BilinearResize { .. } => "bilinear_resize",
        }
    }

    /// Checks the hyperparameters themselves (independent of any input).
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        match *self {
            LayerSpec::Conv2d { kernel, stride, out_channels, .. } => {
                if kernel == 0 || stride == 0 || out_channels == 0 {
                    return fail(format!(
                        "conv2d requires kernel, stride, and out_channels >= 1, got {:?}",
                        self
                    ));
                }
            }
            LayerSpec::MaxPool2d { size, stride } => {
                if size == 0 || stride == 0 {
                    return fail(format!(
                        "maxpool2d requires size and stride >= 1, got {:?}",
                        self
                    ));
                }
            }
            LayerSpec::FullyConnected { out_features } => {
                if out_features == 0 {
                    return fail("fullyconnected requires out_features >= 1".into());
                }
            }
            LayerSpec::BilinearResize { out_h, out_w } => {
                if out_h == 0 || out_w == 0 {
                    return fail("bilinear_resize requires a non-empty target size".into());
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Number of data inputs the layer consumes (`None` = variadic, >= 2).
    pub fn input_arity(&self) -> Option<usize> {
        match self {
            LayerSpec::ConcatChannels => None,
            _ => Some(1),
        }
    }

    /// Number of parameter tensors the layer carries.
    pub fn param_arity(&self) -> usize {
        match self {
            LayerSpec::Conv2d { .. } | LayerSpec::FullyConnected { .. } => 2,
            _ => 0,
        }
    }
}

/// Output spatial extent of a strided window op: floor((in + 2p - k)/s) + 1.
fn window_out_dim(input: usize, window: usize, padding: usize, stride: usize) -> Result<usize> {
    let padded = input + 2 * padding;
    if padded < window {
        return Err(Error::Shape(format!(
            "window of size {} does not fit input extent {} with padding {}",
            window, input, padding
        )));
    }
    Ok((padded - window) / stride + 1)
}

fn check_arity<S: Scalar>(
    spec: &LayerSpec,
    inputs: &[&Tensor<S>],
    params: &[&Tensor<S>],
) -> Result<()> {
    match spec.input_arity() {
        Some(n) if inputs.len() != n => {
            return Err(Error::Usage(format!(
                "{} takes {} input(s), got {}",
                spec.kind(),
                n,
                inputs.len()
            )));
        }
        None if inputs.len() < 2 => {
            return Err(Error::Usage(format!(
                "{} takes at least 2 inputs, got {}",
                spec.kind(),
                inputs.len()
            )));
        }
        _ => {}
    }
    if params.len() != spec.param_arity() {
        return Err(Error::Usage(format!(
            "{} takes {} parameter tensor(s), got {}",
            spec.kind(),
            spec.param_arity(),
            params.len()
        )));
    }
    Ok(())
}

/// Applies a layer to concrete tensors, outside any tape.
///
/// Inputs and parameters must be finite; the output is checked before being
/// returned, so a non-finite result surfaces as a numeric-domain error.
pub fn apply_layer<S: Scalar>(
    spec: &LayerSpec,
    inputs: &[&Tensor<S>],
    params: &[&Tensor<S>],
) -> Result<Tensor<S>> {
    spec.validate()?;
    check_arity(spec, inputs, params)?;
    for t in inputs.iter().chain(params.iter()) {
        t.ensure_finite(spec.kind())?;
    }
    let out = match *spec {
        LayerSpec::Conv2d { kernel, stride, padding, out_channels } => {
            conv2d_forward(inputs[0], params[0], params[1], kernel, stride, padding, out_channels)?
        }
        LayerSpec::MaxPool2d { size, stride } => maxpool_forward(inputs[0], size, stride)?,
        LayerSpec::FullyConnected { out_features } => {
            fc_forward(inputs[0], params[0], params[1], out_features)?
        }
        LayerSpec::Relu => relu_forward(inputs[0]),
        LayerSpec::Sigmoid => sigmoid_forward(inputs[0]),
        LayerSpec::Softmax => softmax_forward(inputs[0]),
        LayerSpec::ConcatChannels => concat_forward(inputs)?,
        LayerSpec::BilinearResize { out_h, out_w } => resize_forward(inputs[0], out_h, out_w)?,
    };
    out.ensure_finite(spec.kind())?;
    Ok(out)
}

/// Gradients of a layer: `(input_grads, param_grads)` in the same order the
/// tensors were passed to [`apply_layer`].
pub fn backward_layer<S: Scalar>(
    spec: &LayerSpec,
    inputs: &[&Tensor<S>],
    params: &[&Tensor<S>],
    output: &Tensor<S>,
    grad_out: &Tensor<S>,
) -> Result<(Vec<Tensor<S>>, Vec<Tensor<S>>)> {
    check_arity(spec, inputs, params)?;
    if grad_out.shape() != output.shape() {
        return Err(Error::Shape(format!(
            "{}: upstream gradient shape {:?} does not match output shape {:?}",
            spec.kind(),
            grad_out.shape(),
            output.shape()
        )));
    }
    match *spec {
        LayerSpec::Conv2d { kernel, stride, padding, .. } => {
            let (dx, dw, db) =
                conv2d_backward(inputs[0], params[0], kernel, stride, padding, grad_out)?;
            Ok((vec![dx], vec![dw, db]))
        }
        LayerSpec::MaxPool2d { size, stride } => {
            Ok((vec![maxpool_backward(inputs[0], size, stride, grad_out)?], vec![]))
        }
        LayerSpec::FullyConnected { .. } => {
            let (dx, dw, db) = fc_backward(inputs[0], params[0], grad_out);
            Ok((vec![dx], vec![dw, db]))
        }
        LayerSpec::Relu => Ok((vec![relu_backward(inputs[0], grad_out)], vec![])),
        LayerSpec::Sigmoid => Ok((vec![sigmoid_backward(output, grad_out)], vec![])),
        LayerSpec::Softmax => Ok((vec![softmax_backward(output, grad_out)], vec![])),
        LayerSpec::ConcatChannels => Ok((concat_backward(inputs, grad_out)?, vec![])),
        LayerSpec::BilinearResize { out_h, out_w } => {
            Ok((vec![resize_backward(inputs[0], out_h, out_w, grad_out)?], vec![]))
        }
    }
}

fn conv_shapes<S: Scalar>(
    input: &Tensor<S>,
    weight: &Tensor<S>,
    kernel: usize,
    stride: usize,
    padding: usize,
    out_channels: usize,
) -> Result<(usize, usize, usize, usize, usize)> {
    let (h, w, ic) = input.dims3()?;
    let expected = [kernel, kernel, ic, out_channels];
    if weight.shape() != expected {
        return Err(Error::Shape(format!(
            "conv2d weight shape {:?} does not match expected {:?} for input {:?}",
            weight.shape(),
            expected,
            input.shape()
        )));
    }
    let oh = window_out_dim(h, kernel, padding, stride)?;
    let ow = window_out_dim(w, kernel, padding, stride)?;
    Ok((h, w, ic, oh, ow))
}

fn conv2d_forward<S: Scalar>(
    input: &Tensor<S>,
    weight: &Tensor<S>,
    bias: &Tensor<S>,
    kernel: usize,
    stride: usize,
    padding: usize,
    out_channels: usize,
) -> Result<Tensor<S>> {
    let (h, w, ic, oh, ow) = conv_shapes(input, weight, kernel, stride, padding, out_channels)?;
    if bias.shape() != [out_channels] {
        return Err(Error::Shape(format!(
            "conv2d bias shape {:?} does not match out_channels {}",
            bias.shape(),
            out_channels
        )));
    }
    let x = input.data();
    let wt = weight.data();
    let b = bias.data();
    let oc = out_channels;
    let mut out = vec![S::zero(); oh * ow * oc];
    for oy in 0..oh {
        for ox in 0..ow {
            let acc = &mut out[(oy * ow + ox) * oc..][..oc];
            acc.copy_from_slice(b);
            for ky in 0..kernel {
                let iy = (oy * stride + ky) as isize - padding as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..kernel {
                    let ix = (ox * stride + kx) as isize - padding as isize;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let x_base = (iy as usize * w + ix as usize) * ic;
                    let w_base = ((ky * kernel + kx) * ic) * oc;
                    for c in 0..ic {
                        let xv = x[x_base + c];
                        let w_row = &wt[w_base + c * oc..][..oc];
                        for o in 0..oc {
                            acc[o] = acc[o] + xv * w_row[o];
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(vec![oh, ow, oc], out)
}

fn conv2d_backward<S: Scalar>(
    input: &Tensor<S>,
    weight: &Tensor<S>,
    kernel: usize,
    stride: usize,
    padding: usize,
    grad_out: &Tensor<S>,
) -> Result<(Tensor<S>, Tensor<S>, Tensor<S>)> {
    let (_, go_w, oc) = grad_out.dims3()?;
    let (h, w, ic, oh, ow) = conv_shapes(input, weight, kernel, stride, padding, oc)?;
    debug_assert_eq!((grad_out.shape()[0], go_w), (oh, ow));
    let x = input.data();
    let wt = weight.data();
    let g = grad_out.data();
    let mut dx = vec![S::zero(); h * w * ic];
    let mut dw = vec![S::zero(); kernel * kernel * ic * oc];
    let mut db = vec![S::zero(); oc];
    for oy in 0..oh {
        for ox in 0..ow {
            let go = &g[(oy * ow + ox) * oc..][..oc];
            for o in 0..oc {
                db[o] += go[o];
            }
            for ky in 0..kernel {
                let iy = (oy * stride + ky) as isize - padding as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..kernel {
                    let ix = (ox * stride + kx) as isize - padding as isize;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let x_base = (iy as usize * w + ix as usize) * ic;
                    let w_base = ((ky * kernel + kx) * ic) * oc;
                    for c in 0..ic {
                        let xv = x[x_base + c];
                        let w_row = &wt[w_base + c * oc..][..oc];
                        let dw_row = &mut dw[w_base + c * oc..][..oc];
                        let mut acc = S::zero();
                        for o in 0..oc {
                            dw_row[o] = dw_row[o] + xv * go[o];
                            acc = acc + w_row[o] * go[o];
                        }
                        dx[x_base + c] += acc;
                    }
                }
            }
        }
    }
    Ok((
        Tensor::from_vec(vec![h, w, ic], dx)?,
        Tensor::from_vec(weight.shape().to_vec(), dw)?,
        Tensor::from_vec(vec![oc], db)?,
    ))
}

fn maxpool_forward<S: Scalar>(input: &Tensor<S>, size: usize, stride: usize) -> Result<Tensor<S>> {
    let (h, w, c) = input.dims3()?;
    let oh = window_out_dim(h, size, 0, stride)?;
    let ow = window_out_dim(w, size, 0, stride)?;
    let x = input.data();
    let mut out = vec![S::zero(); oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let mut best = S::neg_infinity();
                for ky in 0..size {
                    for kx in 0..size {
                        let v = x[((oy * stride + ky) * w + (ox * stride + kx)) * c + ch];
                        if v > best {
                            best = v;
                        }
                    }
                }
                out[(oy * ow + ox) * c + ch] = best;
            }
        }
    }
    Tensor::from_vec(vec![oh, ow, c], out)
}

fn maxpool_backward<S: Scalar>(
    input: &Tensor<S>,
    size: usize,
    stride: usize,
    grad_out: &Tensor<S>,
) -> Result<Tensor<S>> {
    let (h, w, c) = input.dims3()?;
    let (oh, ow, _) = grad_out.dims3()?;
    let x = input.data();
    let g = grad_out.data();
    let mut dx = vec![S::zero(); h * w * c];
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                // Recompute the argmax; ties route to the first element in
                // row-major window scan order, matching the forward pass.
                let mut best = S::neg_infinity();
                let mut best_at = 0usize;
                for ky in 0..size {
                    for kx in 0..size {
                        let at = ((oy * stride + ky) * w + (ox * stride + kx)) * c + ch;
                        if x[at] > best {
                            best = x[at];
                            best_at = at;
                        }
                    }
                }
                dx[best_at] += g[(oy * ow + ox) * c + ch];
            }
        }
    }
    Tensor::from_vec(vec![h, w, c], dx)
}

fn fc_forward<S: Scalar>(
    input: &Tensor<S>,
    weight: &Tensor<S>,
    bias: &Tensor<S>,
    out_features: usize,
) -> Result<Tensor<S>> {
    let n = input.numel();
    if weight.shape() != [n, out_features] {
        return Err(Error::Shape(format!(
            "fullyconnected weight shape {:?} does not match flattened input size {} and out_features {}",
            weight.shape(),
            n,
            out_features
        )));
    }
    if bias.shape() != [out_features] {
        return Err(Error::Shape(format!(
            "fullyconnected bias shape {:?} does not match out_features {}",
            bias.shape(),
            out_features
        )));
    }
    let x = input.data();
    let wt = weight.data();
    let mut out = bias.data().to_vec();
    for (i, &xv) in x.iter().enumerate() {
        let row = &wt[i * out_features..][..out_features];
        for o in 0..out_features {
            out[o] = out[o] + xv * row[o];
        }
    }
    Tensor::from_vec(vec![out_features], out)
}

fn fc_backward<S: Scalar>(
    input: &Tensor<S>,
    weight: &Tensor<S>,
    grad_out: &Tensor<S>,
) -> (Tensor<S>, Tensor<S>, Tensor<S>) {
    let n = input.numel();
    let m = grad_out.numel();
    let x = input.data();
    let wt = weight.data();
    let g = grad_out.data();
    let mut dx = Tensor::zeros(input.shape().to_vec());
    let mut dw = vec![S::zero(); n * m];
    for i in 0..n {
        let w_row = &wt[i * m..][..m];
        let dw_row = &mut dw[i * m..][..m];
        let xv = x[i];
        let mut acc = S::zero();
        for o in 0..m {
            dw_row[o] = xv * g[o];
            acc = acc + w_row[o] * g[o];
        }
        dx.data_mut()[i] = acc;
    }
    (
        dx,
        Tensor::from_vec(weight.shape().to_vec(), dw).expect("fc weight grad shape"),
        Tensor::from_vec(vec![m], g.to_vec()).expect("fc bias grad shape"),
    )
}

fn relu_forward<S: Scalar>(input: &Tensor<S>) -> Tensor<S> {
    let mut out = Tensor::zeros(input.shape().to_vec());
    for (o, &x) in out.data_mut().iter_mut().zip(input.data()) {
        *o = if x > S::zero() { x } else { S::zero() };
    }
    out
}

fn relu_backward<S: Scalar>(input: &Tensor<S>, grad_out: &Tensor<S>) -> Tensor<S> {
    let mut dx = Tensor::zeros(input.shape().to_vec());
    for ((d, &x), &g) in dx.data_mut().iter_mut().zip(input.data()).zip(grad_out.data()) {
        *d = if x > S::zero() { g } else { S::zero() };
    }
    dx
}

/// Logistic function, stable for large |x| in either direction.
pub fn sigmoid_scalar<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

fn sigmoid_forward<S: Scalar>(input: &Tensor<S>) -> Tensor<S> {
    let mut out = Tensor::zeros(input.shape().to_vec());
    for (o, &x) in out.data_mut().iter_mut().zip(input.data()) {
        *o = sigmoid_scalar(x);
    }
    out
}

fn sigmoid_backward<S: Scalar>(output: &Tensor<S>, grad_out: &Tensor<S>) -> Tensor<S> {
    let mut dx = Tensor::zeros(output.shape().to_vec());
    for ((d, &y), &g) in dx.data_mut().iter_mut().zip(output.data()).zip(grad_out.data()) {
        *d = g * y * (S::one() - y);
    }
    dx
}

fn softmax_forward<S: Scalar>(input: &Tensor<S>) -> Tensor<S> {
    let max = input.data().iter().copied().fold(S::neg_infinity(), S::max);
    let mut out = Tensor::zeros(input.shape().to_vec());
    let mut sum = S::zero();
    for (o, &x) in out.data_mut().iter_mut().zip(input.data()) {
        let e = (x - max).exp();
        *o = e;
        sum += e;
    }
    for o in out.data_mut() {
        *o /= sum;
    }
    out
}

fn softmax_backward<S: Scalar>(output: &Tensor<S>, grad_out: &Tensor<S>) -> Tensor<S> {
    let dot: S = output
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&y, &g)| y * g)
        .sum();
    let mut dx = Tensor::zeros(output.shape().to_vec());
    for ((d, &y), &g) in dx.data_mut().iter_mut().zip(output.data()).zip(grad_out.data()) {
        *d = y * (g - dot);
    }
    dx
}

fn concat_forward<S: Scalar>(inputs: &[&Tensor<S>]) -> Result<Tensor<S>> {
    let (h, w, _) = inputs[0].dims3()?;
    let mut total_c = 0usize;
    for t in inputs {
        let (th, tw, tc) = t.dims3()?;
        if (th, tw) != (h, w) {
            return Err(Error::Shape(format!(
                "concat_channels requires equal spatial dims, got {:?} and {:?}",
                inputs[0].shape(),
                t.shape()
            )));
        }
        total_c += tc;
    }
    let mut out = vec![S::zero(); h * w * total_c];
    for y in 0..h {
        for x in 0..w {
            let mut at = (y * w + x) * total_c;
            for t in inputs {
                let tc = t.shape()[2];
                let src = &t.data()[(y * w + x) * tc..][..tc];
                out[at..at + tc].copy_from_slice(src);
                at += tc;
            }
        }
    }
    Tensor::from_vec(vec![h, w, total_c], out)
}

fn concat_backward<S: Scalar>(inputs: &[&Tensor<S>], grad_out: &Tensor<S>) -> Result<Vec<Tensor<S>>> {
    let (h, w, total_c) = grad_out.dims3()?;
    let g = grad_out.data();
    let mut grads: Vec<Tensor<S>> =
        inputs.iter().map(|t| Tensor::zeros(t.shape().to_vec())).collect();
    for y in 0..h {
        for x in 0..w {
            let mut at = (y * w + x) * total_c;
            for (t, gt) in inputs.iter().zip(grads.iter_mut()) {
                let tc = t.shape()[2];
                let dst_at = (y * w + x) * tc;
                gt.data_mut()[dst_at..dst_at + tc].copy_from_slice(&g[at..at + tc]);
                at += tc;
            }
        }
    }
    Ok(grads)
}

/// Source coordinates and blend weights for one corner-aligned output index.
fn resize_axis(out_i: usize, out_len: usize, in_len: usize) -> (usize, usize, f64) {
    if out_len <= 1 || in_len <= 1 {
        return (0, 0, 0.0);
    }
    let scale = (in_len - 1) as f64 / (out_len - 1) as f64;
    let pos = out_i as f64 * scale;
    let lo = (pos.floor() as usize).min(in_len - 1);
    let hi = (lo + 1).min(in_len - 1);
    (lo, hi, pos - lo as f64)
}

fn resize_forward<S: Scalar>(input: &Tensor<S>, out_h: usize, out_w: usize) -> Result<Tensor<S>> {
    let (h, w, c) = input.dims3()?;
    let x = input.data();
    let mut out = vec![S::zero(); out_h * out_w * c];
    for oy in 0..out_h {
        let (y0, y1, fy) = resize_axis(oy, out_h, h);
        let fy = S::from_f64(fy);
        for ox in 0..out_w {
            let (x0, x1, fx) = resize_axis(ox, out_w, w);
            let fx = S::from_f64(fx);
            let one = S::one();
            for ch in 0..c {
                let a = x[(y0 * w + x0) * c + ch];
                let b = x[(y0 * w + x1) * c + ch];
                let d = x[(y1 * w + x0) * c + ch];
                let e = x[(y1 * w + x1) * c + ch];
                let top = a * (one - fx) + b * fx;
                let bot = d * (one - fx) + e * fx;
                out[(oy * out_w + ox) * c + ch] = top * (one - fy) + bot * fy;
            }
        }
    }
    Tensor::from_vec(vec![out_h, out_w, c], out)
}

fn resize_backward<S: Scalar>(
    input: &Tensor<S>,
    out_h: usize,
    out_w: usize,
    grad_out: &Tensor<S>,
) -> Result<Tensor<S>> {
    let (h, w, c) = input.dims3()?;
    let g = grad_out.data();
    let mut dx = vec![S::zero(); h * w * c];
    for oy in 0..out_h {
        let (y0, y1, fy) = resize_axis(oy, out_h, h);
        let fy = S::from_f64(fy);
        for ox in 0..out_w {
            let (x0, x1, fx) = resize_axis(ox, out_w, w);
            let fx = S::from_f64(fx);
            let one = S::one();
            for ch in 0..c {
                let gv = g[(oy * out_w + ox) * c + ch];
                dx[(y0 * w + x0) * c + ch] += gv * (one - fy) * (one - fx);
                dx[(y0 * w + x1) * c + ch] += gv * (one - fy) * fx;
                dx[(y1 * w + x0) * c + ch] += gv * fy * (one - fx);
                dx[(y1 * w + x1) * c + ch] += gv * fy * fx;
            }
        }
    }
    Tensor::from_vec(vec![h, w, c], dx)
}
