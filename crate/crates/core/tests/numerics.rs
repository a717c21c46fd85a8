//! Layer kernel behavior: frozen small examples plus finite-difference
//! verification of every layer kind's backward pass.

use iadn_core::error::{Error, Result};
use iadn_core::numerics::{
    apply_layer, grad_check, GradCheckOptions, LayerSpec, Tape, TapeOp, Tensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn t3(h: usize, w: usize, c: usize, data: Vec<f64>) -> Tensor<f64> {
    Tensor::from_vec(vec![h, w, c], data).unwrap()
}

// ---------------------------------------------------------------------------
// Frozen forward examples
// ---------------------------------------------------------------------------

#[test]
fn conv_with_identity_kernel_reproduces_input() {
    let x = t3(2, 2, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
    // 1x1 kernel, identity over channels.
    let w = Tensor::from_vec(vec![1, 1, 2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let b = Tensor::zeros(vec![2]);
    let spec = LayerSpec::Conv2d { kernel: 1, stride: 1, padding: 0, out_channels: 2 };
    let y = apply_layer(&spec, &[&x], &[&w, &b]).unwrap();
    assert_eq!(y, x);
}

#[test]
fn conv_mean_kernel_preserves_constant_interior() {
    let x = Tensor::filled(vec![5, 5, 1], 0.7f64);
    let w = Tensor::filled(vec![3, 3, 1, 1], 1.0 / 9.0);
    let b = Tensor::zeros(vec![1]);
    let spec = LayerSpec::Conv2d { kernel: 3, stride: 1, padding: 1, out_channels: 1 };
    let y = apply_layer(&spec, &[&x], &[&w, &b]).unwrap();
    assert_eq!(y.shape(), &[5, 5, 1]);
    // Away from the zero-padded border, averaging a constant keeps it.
    for yy in 1..4 {
        for xx in 1..4 {
            assert!((y.at3(yy, xx, 0) - 0.7).abs() < 1e-12);
        }
    }
    // On the border, zero padding pulls the average down.
    assert!(y.at3(0, 0, 0) < 0.7);
}

#[test]
fn conv_stride_and_padding_shape_arithmetic() {
    let x = Tensor::filled(vec![8, 6, 1], 1.0f64);
    let w = Tensor::filled(vec![3, 3, 1, 2], 0.1);
    let b = Tensor::zeros(vec![2]);
    let spec = LayerSpec::Conv2d { kernel: 3, stride: 2, padding: 1, out_channels: 2 };
    let y = apply_layer(&spec, &[&x], &[&w, &b]).unwrap();
    // floor((8 + 2 - 3)/2) + 1 = 4, floor((6 + 2 - 3)/2) + 1 = 3.
    assert_eq!(y.shape(), &[4, 3, 2]);
}

#[test]
fn maxpool_takes_window_maximum_and_routes_gradient_to_it() {
    let x = t3(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]);
    let spec = LayerSpec::MaxPool2d { size: 2, stride: 2 };
    let y = apply_layer(&spec, &[&x], &[]).unwrap();
    assert_eq!(y.shape(), &[1, 1, 1]);
    assert_eq!(y.data(), &[4.0]);

    let mut tape = Tape::<f64>::new();
    let xid = tape.leaf(x).unwrap();
    let yid = tape.apply_layer(&spec, &[xid], &[]).unwrap();
    let grads = tape.backprop_scalar(yid).unwrap();
    // Only the argmax position receives gradient.
    assert_eq!(grads.grad(xid).unwrap().data(), &[0.0, 0.0, 0.0, 1.0]);
}

#[test]
fn maxpool_tie_routes_gradient_to_first_in_scan_order() {
    let x = t3(2, 2, 1, vec![5.0, 5.0, 5.0, 5.0]);
    let spec = LayerSpec::MaxPool2d { size: 2, stride: 2 };
    let mut tape = Tape::<f64>::new();
    let xid = tape.leaf(x).unwrap();
    let yid = tape.apply_layer(&spec, &[xid], &[]).unwrap();
    let grads = tape.backprop_scalar(yid).unwrap();
    assert_eq!(grads.grad(xid).unwrap().data(), &[1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn relu_values_and_subgradient_at_zero() {
    let x = Tensor::from_vec(vec![3], vec![-1.0f64, 0.0, 2.0]).unwrap();
    let y = apply_layer(&LayerSpec::Relu, &[&x], &[]).unwrap();
    assert_eq!(y.data(), &[0.0, 0.0, 2.0]);

    let mut tape = Tape::<f64>::new();
    let xid = tape.leaf(x).unwrap();
    let yid = tape.apply_layer(&LayerSpec::Relu, &[xid], &[]).unwrap();
    let seed = Tensor::filled(vec![3], 1.0);
    let grads = tape.backprop(yid, &seed).unwrap();
    // The subgradient at exactly zero is zero.
    assert_eq!(grads.grad(xid).unwrap().data(), &[0.0, 0.0, 1.0]);
}

#[test]
fn sigmoid_midpoint_and_saturation_are_stable() {
    let x = Tensor::from_vec(vec![3], vec![0.0f64, 40.0, -40.0]).unwrap();
    let y = apply_layer(&LayerSpec::Sigmoid, &[&x], &[]).unwrap();
    assert_eq!(y.data()[0], 0.5);
    assert!(y.data()[1].is_finite() && y.data()[1] > 0.999);
    assert!(y.data()[2].is_finite() && y.data()[2] < 0.001 && y.data()[2] > 0.0);
}

#[test]
fn softmax_uniform_and_large_logits() {
    let y = apply_layer(
        &LayerSpec::Softmax,
        &[&Tensor::from_vec(vec![2], vec![0.0f64, 0.0]).unwrap()],
        &[],
    )
    .unwrap();
    assert_eq!(y.data(), &[0.5, 0.5]);

    // Max subtraction keeps huge logits in range.
    let y = apply_layer(
        &LayerSpec::Softmax,
        &[&Tensor::from_vec(vec![2], vec![1000.0f64, 1000.0]).unwrap()],
        &[],
    )
    .unwrap();
    assert_eq!(y.data(), &[0.5, 0.5]);
}

#[test]
fn softmax_shift_invariance_is_exact() {
    let logits = vec![0.3f64, -1.7, 2.2];
    let a = apply_layer(
        &LayerSpec::Softmax,
        &[&Tensor::from_vec(vec![3], logits.clone()).unwrap()],
        &[],
    )
    .unwrap();
    let shifted: Vec<f64> = logits.iter().map(|v| v + 123.25).collect();
    let b = apply_layer(
        &LayerSpec::Softmax,
        &[&Tensor::from_vec(vec![3], shifted).unwrap()],
        &[],
    )
    .unwrap();
    for (x, y) in a.data().iter().zip(b.data()) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn fully_connected_flattens_input() {
    // Input [2, 2] flattened to 4 features.
    let x = Tensor::from_vec(vec![2, 2], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
    let w = Tensor::from_vec(vec![4, 2], vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
    let b = Tensor::from_vec(vec![2], vec![0.5, -0.5]).unwrap();
    let spec = LayerSpec::FullyConnected { out_features: 2 };
    let y = apply_layer(&spec, &[&x], &[&w, &b]).unwrap();
    assert_eq!(y.shape(), &[2]);
    assert_eq!(y.data(), &[1.0 + 3.0 + 0.5, 2.0 + 4.0 - 0.5]);
}

#[test]
fn concat_channels_interleaves_per_pixel() {
    let a = t3(1, 2, 1, vec![1.0, 2.0]);
    let b = t3(1, 2, 2, vec![10.0, 20.0, 30.0, 40.0]);
    let y = apply_layer(&LayerSpec::ConcatChannels, &[&a, &b], &[]).unwrap();
    assert_eq!(y.shape(), &[1, 2, 3]);
    assert_eq!(y.data(), &[1.0, 10.0, 20.0, 2.0, 30.0, 40.0]);
}

#[test]
fn bilinear_resize_corner_aligned_2x2_to_3x3() {
    let x = t3(2, 2, 1, vec![0.0, 1.0, 2.0, 3.0]);
    let spec = LayerSpec::BilinearResize { out_h: 3, out_w: 3 };
    let y = apply_layer(&spec, &[&x], &[]).unwrap();
    assert_eq!(y.shape(), &[3, 3, 1]);
    let expected = [0.0, 0.5, 1.0, 1.0, 1.5, 2.0, 2.0, 2.5, 3.0];
    assert_eq!(y.data(), &expected);
}

#[test]
fn bilinear_resize_identity_when_sizes_match() {
    let x = t3(3, 2, 2, (0..12).map(|i| i as f64 * 0.25).collect());
    let spec = LayerSpec::BilinearResize { out_h: 3, out_w: 2 };
    let y = apply_layer(&spec, &[&x], &[]).unwrap();
    assert_eq!(y, x);
}

// ---------------------------------------------------------------------------
// Error paths
// ---------------------------------------------------------------------------

#[test]
fn mismatched_weight_shape_is_a_shape_error() {
    let x = Tensor::filled(vec![4, 4, 3], 0.5f64);
    let w = Tensor::filled(vec![3, 3, 2, 4], 0.1); // wrong in_channels
    let b = Tensor::zeros(vec![4]);
    let spec = LayerSpec::Conv2d { kernel: 3, stride: 1, padding: 1, out_channels: 4 };
    let err = apply_layer(&spec, &[&x], &[&w, &b]).unwrap_err();
    assert!(matches!(err, Error::Shape(_)), "got {err:?}");
}

#[test]
fn window_larger_than_input_is_a_shape_error() {
    let x = Tensor::filled(vec![2, 2, 1], 0.5f64);
    let spec = LayerSpec::MaxPool2d { size: 3, stride: 1 };
    assert!(matches!(apply_layer(&spec, &[&x], &[]), Err(Error::Shape(_))));
}

#[test]
fn wrong_arity_is_a_usage_error() {
    let x = Tensor::filled(vec![2, 2, 1], 0.5f64);
    let err = apply_layer(&LayerSpec::Relu, &[&x, &x], &[]).unwrap_err();
    assert!(matches!(err, Error::Usage(_)));
    let err = apply_layer(&LayerSpec::ConcatChannels, &[&x], &[]).unwrap_err();
    assert!(matches!(err, Error::Usage(_)));
    let err = apply_layer(&LayerSpec::Relu, &[&x], &[&x]).unwrap_err();
    assert!(matches!(err, Error::Usage(_)));
}

#[test]
fn non_finite_input_is_a_numeric_error() {
    let mut x = Tensor::filled(vec![2, 2, 1], 0.5f64);
    x.data_mut()[1] = f64::NAN;
    assert!(matches!(
        apply_layer(&LayerSpec::Relu, &[&x], &[]),
        Err(Error::Numeric(_))
    ));
}

// ---------------------------------------------------------------------------
// Finite-difference checks, 100 random instances per layer kind
// ---------------------------------------------------------------------------

/// Reduces an arbitrary tensor to a scalar with fixed weights so layers can
/// be checked through `grad_check`. The weight tensor is itself a leaf (its
/// gradient is the layer's output, giving the check extra coverage).
#[derive(Debug)]
struct DotOp;

impl TapeOp<f64> for DotOp {
    fn name(&self) -> &str {
        "dot"
    }
    fn forward(&self, inputs: &[&Tensor<f64>]) -> Result<Tensor<f64>> {
        if inputs[0].numel() != inputs[1].numel() {
            return Err(Error::Shape("dot operands must have equal size".into()));
        }
        Ok(Tensor::scalar(
            inputs[0].data().iter().zip(inputs[1].data()).map(|(&a, &b)| a * b).sum(),
        ))
    }
    fn backward(
        &self,
        inputs: &[&Tensor<f64>],
        _output: &Tensor<f64>,
        grad_out: &Tensor<f64>,
    ) -> Result<Vec<Tensor<f64>>> {
        let g = grad_out.item()?;
        let mut da = inputs[1].reshaped(inputs[0].shape().to_vec())?;
        da.scale(g);
        let mut db = inputs[0].reshaped(inputs[1].shape().to_vec())?;
        db.scale(g);
        Ok(vec![da, db])
    }
}

/// Runs `grad_check` on `spec` with the given data/parameter tensors,
/// asserting the relative error bound used throughout the suite.
fn check_layer(spec: &LayerSpec, data: Vec<Tensor<f64>>, params: Vec<Tensor<f64>>, tag: &str) {
    let n_data = data.len();
    let n_params = params.len();
    // Probe the output size to build the dot weights.
    let data_refs: Vec<&Tensor<f64>> = data.iter().collect();
    let param_refs: Vec<&Tensor<f64>> = params.iter().collect();
    let out = apply_layer(spec, &data_refs, &param_refs).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0xD07);
    let dot_w = Tensor::from_fn(vec![out.numel()], |_| rng.gen_range(-1.0..1.0));

    let mut point = data;
    point.extend(params);
    point.push(dot_w);

    let report = grad_check(
        |tape, ids| {
            let y = tape.apply_layer(
                spec,
                &ids[..n_data],
                &ids[n_data..n_data + n_params],
            )?;
            tape.record(Box::new(DotOp), &[y, ids[n_data + n_params]])
        },
        &point,
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert!(
        report.max_rel_error < 1e-4,
        "{tag}: rel error {} at {:?} (analytic/numeric {:?})",
        report.max_rel_error,
        report.worst_coord,
        report.worst_pair
    );
}

/// Uniform tensor with entries in [-1, 1].
fn rand_t(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

/// Tensor whose entries are pairwise separated by at least ~0.1 so max-pool
/// argmaxes are stable under the finite-difference step.
fn rand_separated(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor<f64> {
    let numel: usize = shape.iter().product();
    let mut levels: Vec<usize> = (0..numel).collect();
    // Fisher-Yates shuffle driven by the test rng.
    for i in (1..levels.len()).rev() {
        let j = rng.gen_range(0..=i);
        levels.swap(i, j);
    }
    Tensor::from_fn(shape, |i| levels[i] as f64 * 0.1 + rng.gen_range(-1e-3..1e-3))
}

#[test]
fn fd_conv2d() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..100 {
        let (h, w) = (rng.gen_range(3..6), rng.gen_range(3..6));
        let (ic, oc) = (rng.gen_range(1..4), rng.gen_range(1..4));
        let kernel = if rng.gen_bool(0.5) { 1 } else { 3 };
        let stride = rng.gen_range(1..3);
        let padding = rng.gen_range(0..2);
        let spec = LayerSpec::Conv2d { kernel, stride, padding, out_channels: oc };
        let x = rand_t(&mut rng, vec![h, w, ic]);
        let wt = rand_t(&mut rng, vec![kernel, kernel, ic, oc]);
        let b = rand_t(&mut rng, vec![oc]);
        check_layer(&spec, vec![x], vec![wt, b], &format!("conv2d #{i}"));
    }
}

#[test]
fn fd_maxpool2d() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for i in 0..100 {
        let (h, w, c) = (rng.gen_range(2..6), rng.gen_range(2..6), rng.gen_range(1..3));
        let size = 2.min(h).min(w);
        let stride = rng.gen_range(1..3);
        let spec = LayerSpec::MaxPool2d { size, stride };
        let x = rand_separated(&mut rng, vec![h, w, c]);
        check_layer(&spec, vec![x], vec![], &format!("maxpool2d #{i}"));
    }
}

#[test]
fn fd_fully_connected() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..100 {
        let n = rng.gen_range(1..9);
        let m = rng.gen_range(1..6);
        let spec = LayerSpec::FullyConnected { out_features: m };
        // Exercise flattening by sometimes making the input rank 3.
        let x = if rng.gen_bool(0.5) && n % 2 == 0 {
            rand_t(&mut rng, vec![n / 2, 2, 1])
        } else {
            rand_t(&mut rng, vec![n])
        };
        let numel = x.numel();
        let wt = rand_t(&mut rng, vec![numel, m]);
        let b = rand_t(&mut rng, vec![m]);
        check_layer(&spec, vec![x], vec![wt, b], &format!("fullyconnected #{i}"));
    }
}

#[test]
fn fd_relu_away_from_kink() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..100 {
        let n = rng.gen_range(1..12);
        // The kink at 0 breaks central differences, so keep |x| > 1e-3.
        let x = Tensor::from_fn(vec![n], |_| {
            let mag = rng.gen_range(1e-3..1.0);
            if rng.gen_bool(0.5) {
                mag
            } else {
                -mag
            }
        });
        check_layer(&LayerSpec::Relu, vec![x], vec![], &format!("relu #{i}"));
    }
}

#[test]
fn fd_sigmoid() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..100 {
        let n = rng.gen_range(1..12);
        let x = Tensor::from_fn(vec![n], |_| rng.gen_range(-3.0..3.0));
        check_layer(&LayerSpec::Sigmoid, vec![x], vec![], &format!("sigmoid #{i}"));
    }
}

#[test]
fn fd_softmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for i in 0..100 {
        let n = rng.gen_range(2..8);
        let x = Tensor::from_fn(vec![n], |_| rng.gen_range(-2.0..2.0));
        check_layer(&LayerSpec::Softmax, vec![x], vec![], &format!("softmax #{i}"));
    }
}

#[test]
fn fd_concat_channels() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..100 {
        let (h, w) = (rng.gen_range(1..4), rng.gen_range(1..4));
        let k = rng.gen_range(2..4);
        let inputs: Vec<Tensor<f64>> = (0..k)
            .map(|_| {
                let c = rng.gen_range(1..3);
                rand_t(&mut rng, vec![h, w, c])
            })
            .collect();
        check_layer(&LayerSpec::ConcatChannels, inputs, vec![], &format!("concat #{i}"));
    }
}

#[test]
fn fd_bilinear_resize() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for i in 0..100 {
        let (h, w, c) = (rng.gen_range(1..5), rng.gen_range(1..5), rng.gen_range(1..3));
        let (oh, ow) = (rng.gen_range(1..6), rng.gen_range(1..6));
        let spec = LayerSpec::BilinearResize { out_h: oh, out_w: ow };
        let x = rand_t(&mut rng, vec![h, w, c]);
        check_layer(&spec, vec![x], vec![], &format!("bilinear_resize #{i}"));
    }
}

// ---------------------------------------------------------------------------
// Chained-layer check: a small composite graph end to end
// ---------------------------------------------------------------------------

#[test]
fn fd_composite_conv_relu_pool_fc() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = rand_t(&mut rng, vec![4, 4, 2]);
    let w1 = rand_t(&mut rng, vec![3, 3, 2, 3]);
    let b1 = rand_t(&mut rng, vec![3]);
    let w2 = rand_t(&mut rng, vec![2 * 2 * 3, 4]);
    let b2 = rand_t(&mut rng, vec![4]);
    let dot_w = rand_t(&mut rng, vec![4]);
    let point = vec![x, w1, b1, w2, b2, dot_w];

    let report = grad_check(
        |tape, ids| {
            let conv = LayerSpec::Conv2d { kernel: 3, stride: 1, padding: 1, out_channels: 3 };
            let y = tape.apply_layer(&conv, &[ids[0]], &[ids[1], ids[2]])?;
            let y = tape.apply_layer(&LayerSpec::Relu, &[y], &[])?;
            let y = tape.apply_layer(&LayerSpec::MaxPool2d { size: 2, stride: 2 }, &[y], &[])?;
            let y = tape.apply_layer(
                &LayerSpec::FullyConnected { out_features: 4 },
                &[y],
                &[ids[3], ids[4]],
            )?;
            let y = tape.apply_layer(&LayerSpec::Sigmoid, &[y], &[])?;
            tape.record(Box::new(DotOp), &[y, ids[5]])
        },
        &point,
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-4, "rel error {}", report.max_rel_error);
}
