use super::*;
use crate::rng::Prng;
use approx::assert_relative_eq;
use std::vec::Vec;

const TABLE3: [(usize, usize); 9] = [
    (2, 7),
    (4, 19),
    (8, 43),
    (16, 91),
    (32, 187),
    (64, 379),
    (128, 763),
    (256, 1531),
    (512, 3067),
];

/// Counts parameters by walking every weight and bias slot.
fn enumerate_params(spec: &ModelSpec) -> usize {
    let mut count = 0;
    for layer in &spec.layers {
        match *layer {
            LayerSpec::Dense { inputs, outputs } => {
                for _o in 0..outputs {
                    for _i in 0..inputs {
                        count += 1;
                    }
                    count += 1;
                }
            }
            LayerSpec::Conv2d { in_channels, out_channels, kernel } => {
                for _oc in 0..out_channels {
                    for _ic in 0..in_channels {
                        for _k in 0..kernel * kernel {
                            count += 1;
                        }
                    }
                    count += 1;
                }
            }
            _ => {}
        }
    }
    count
}

#[test]
fn dnn_parameter_counts() {
    for (n, expected) in TABLE3 {
        let spec = build_dnn(n).unwrap();
        assert_eq!(spec.param_count(), expected, "depth {n}");
        assert_eq!(enumerate_params(&spec), expected);
        assert_eq!(6 * n - 5, expected);
    }
    assert!(build_dnn(1).is_err());
    assert!(build_dnn(0).is_err());
}

#[test]
fn dnn_structure() {
    let spec = build_dnn(4).unwrap();
    assert_eq!(
        spec.layers,
        [
            LayerSpec::Dense { inputs: 4, outputs: 2 },
            LayerSpec::Relu,
            LayerSpec::Dense { inputs: 2, outputs: 2 },
            LayerSpec::Relu,
            LayerSpec::Dense { inputs: 2, outputs: 1 },
        ]
    );
    let two = build_dnn(2).unwrap();
    assert_eq!(
        two.layers,
        [LayerSpec::Dense { inputs: 4, outputs: 1 }, LayerSpec::Relu, LayerSpec::Dense { inputs: 1, outputs: 1 }]
    );
}

#[test]
fn cnn_parameter_counts() {
    let two = build_cnn(&CnnConfig::new(2)).unwrap();
    assert_eq!(two.param_count(), 779);
    let deep = build_cnn(&CnnConfig::new(32)).unwrap();
    assert_eq!(deep.param_count(), 1919);
    assert_eq!(enumerate_params(&deep), 1919);
    for depth in [1, 2, 4, 8, 16, 32, 64, 128, 256] {
        let cfg = CnnConfig::new(depth);
        let spec = build_cnn(&cfg).unwrap();
        assert_eq!(spec.param_count(), cfg.param_count());
        assert_eq!(enumerate_params(&spec), cfg.param_count());
    }
    let reduced = CnnConfig { kernel: 5, pool: 4, ..CnnConfig::new(32) };
    assert_eq!(build_cnn(&reduced).unwrap().param_count(), reduced.param_count());
}

#[test]
fn degenerate_cnn() {
    let cfg = CnnConfig { n_conv: 1, filters: 1, kernel: 1, pool: 30, input_height: 30, input_width: 30 };
    let spec = build_cnn(&cfg).unwrap();
    assert_eq!(spec.param_count(), 4);
    assert!(build_cnn(&CnnConfig { kernel: 4, ..CnnConfig::new(2) }).is_err());
    assert!(build_cnn(&CnnConfig { pool: 31, ..CnnConfig::new(2) }).is_err());
    assert!(build_cnn(&CnnConfig { n_conv: 0, ..CnnConfig::new(2) }).is_err());
}

#[test]
fn init_is_deterministic_with_zero_biases() {
    let spec = build_dnn(8).unwrap();
    let a = ModelState::init(&spec, 11).unwrap();
    let b = ModelState::init(&spec, 11).unwrap();
    assert_eq!(a.params(), b.params());
    assert_ne!(a.params(), ModelState::init(&spec, 12).unwrap().params());
    assert_eq!(a.params().len(), spec.param_count());
    for (i, layer) in spec.layers.iter().enumerate() {
        if let LayerSpec::Dense { inputs, outputs } = *layer {
            let start = a.offsets[i];
            let biases = &a.params()[start + inputs * outputs..start + inputs * outputs + outputs];
            assert!(biases.iter().all(|&b| b == 0.0));
        }
    }
    // dense 4→2: Glorot bound sqrt(6 / 6) = 1
    assert!(a.params()[..8].iter().all(|w| w.abs() <= 1.0));
}

#[test]
fn flat_vector_matches_count_for_all_grid_specs() {
    for (n, _) in TABLE3 {
        let spec = build_dnn(n).unwrap();
        assert_eq!(ModelState::init(&spec, 0).unwrap().params().len(), spec.param_count());
    }
    for depth in [2, 4, 8, 16, 32, 64, 128, 256] {
        let spec = build_cnn(&CnnConfig::new(depth)).unwrap();
        assert_eq!(ModelState::init(&spec, 0).unwrap().params().len(), spec.param_count());
    }
}

#[test]
fn zero_parameters_predict_zero() {
    let spec = build_dnn(8).unwrap();
    let state = ModelState::from_params(spec.clone(), vec![0.0; spec.param_count()], 0).unwrap();
    let x = Tensor::new(vec![3, 4], vec![0.3, -1.0, 0.5, 0.9, 1.0, 1.0, -1.0, 0.2, 0.0, 0.1, 0.2, 0.3]).unwrap();
    assert_eq!(state.forward(&x).unwrap().data(), &[0.0, 0.0, 0.0]);
}

#[test]
fn single_dense_unit() {
    let spec = ModelSpec { input_shape: vec![1], layers: vec![LayerSpec::Dense { inputs: 1, outputs: 1 }] };
    let state = ModelState::from_params(spec, vec![2.0, 1.0], 0).unwrap();
    let y = state.forward(&Tensor::new(vec![1, 1], vec![3.0]).unwrap()).unwrap();
    assert_eq!(y.shape(), &[1, 1]);
    assert_eq!(y.data(), &[7.0]);
}

#[test]
fn conv_center_is_full_correlation() {
    let spec = ModelSpec {
        input_shape: vec![1, 3, 3],
        layers: vec![
            LayerSpec::Conv2d { in_channels: 1, out_channels: 1, kernel: 3 },
            LayerSpec::Flatten,
            // pick out the center pixel
            LayerSpec::Dense { inputs: 9, outputs: 1 },
        ],
    };
    let kernel = [0.5, -1.0, 2.0, 0.25, 1.5, -0.75, 3.0, 0.125, -2.0];
    let input = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0];
    let mut params = kernel.to_vec();
    params.push(0.0);
    let mut select = vec![0.0; 9];
    select[4] = 1.0;
    params.extend(select);
    params.push(0.0);
    let state = ModelState::from_params(spec, params, 0).unwrap();
    let y = state.forward(&Tensor::new(vec![1, 1, 3, 3], input.to_vec()).unwrap()).unwrap();
    let expected: f64 = kernel.iter().zip(&input).map(|(k, x)| k * x).sum();
    assert_eq!(expected, 0.5 - 2.0 + 6.0 + 1.0 + 7.5 - 4.5 + 21.0 + 1.0 - 18.0);
    assert_relative_eq!(y.data()[0], expected, max_relative = 1e-15);
}

#[test]
fn conv_corner_uses_zero_padding() {
    let spec = ModelSpec {
        input_shape: vec![1, 2, 2],
        layers: vec![
            LayerSpec::Conv2d { in_channels: 1, out_channels: 1, kernel: 3 },
            LayerSpec::Flatten,
            LayerSpec::Dense { inputs: 4, outputs: 1 },
        ],
    };
    // all-ones kernel: top-left output sums the whole 2x2 input
    let mut params = vec![1.0; 9];
    params.push(0.5);
    params.extend([1.0, 0.0, 0.0, 0.0, 0.0]);
    let state = ModelState::from_params(spec, params, 0).unwrap();
    let y = state.forward(&Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap()).unwrap();
    assert_eq!(y.data(), &[10.5]);
}

#[test]
fn maxpool_picks_window_maximum() {
    let spec = ModelSpec {
        input_shape: vec![1, 2, 4],
        layers: vec![
            LayerSpec::MaxPool { size: 2 },
            LayerSpec::Flatten,
            LayerSpec::Dense { inputs: 2, outputs: 1 },
        ],
    };
    let state = ModelState::from_params(spec, vec![1.0, 10.0, 0.0], 0).unwrap();
    let x = Tensor::new(vec![1, 1, 2, 4], vec![1.0, 5.0, -3.0, -2.0, 4.0, 2.0, -1.0, -4.0]).unwrap();
    assert_eq!(state.forward(&x).unwrap().data(), &[5.0 - 10.0]);
}

#[test]
fn maxpool_tie_routes_gradient_to_first() {
    let spec = ModelSpec {
        input_shape: vec![1, 2, 2],
        layers: vec![
            LayerSpec::Conv2d { in_channels: 1, out_channels: 1, kernel: 1 },
            LayerSpec::MaxPool { size: 2 },
            LayerSpec::Flatten,
            LayerSpec::Dense { inputs: 1, outputs: 1 },
        ],
    };
    let state = ModelState::from_params(spec, vec![1.0, 0.0, 1.0, 0.0], 0).unwrap();
    let x = Tensor::new(vec![1, 1, 2, 2], vec![3.0, 3.0, 1.0, 3.0]).unwrap();
    let (_, g) = state.loss_and_gradient(&x, &[0.0]).unwrap();
    // d loss / d conv weight = 2 * (3 - 0) * x[first max] = 6 * 3
    assert_eq!(g[0], 18.0);
}

#[test]
fn shape_errors_name_the_layer() {
    let spec = build_dnn(4).unwrap();
    let state = ModelState::init(&spec, 1).unwrap();
    let bad = Tensor::new(vec![2, 3], vec![0.0; 6]).unwrap();
    assert!(matches!(state.forward(&bad), Err(NnError::Shape { layer: None, .. })));
    let bad_spec = ModelSpec {
        input_shape: vec![4],
        layers: vec![LayerSpec::Dense { inputs: 4, outputs: 2 }, LayerSpec::Dense { inputs: 3, outputs: 1 }],
    };
    assert!(matches!(bad_spec.validate(), Err(NnError::Shape { layer: Some(1), .. })));
    assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
}

#[test]
fn non_finite_activations_rejected() {
    let spec = ModelSpec { input_shape: vec![1], layers: vec![LayerSpec::Dense { inputs: 1, outputs: 1 }] };
    let state = ModelState::from_params(spec, vec![f64::MAX, 0.0], 0).unwrap();
    let x = Tensor::new(vec![1, 1], vec![10.0]).unwrap();
    assert_eq!(state.forward(&x), Err(NnError::NonFinite { layer: 0 }));
}

#[test]
fn mse_examples() {
    assert_eq!(loss_mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
    assert_eq!(loss_mse(&[0.0, 0.0], &[1.0, 3.0]).unwrap(), 5.0);
    assert_eq!(loss_mse(&[0.2, -1.0], &[1.5, 3.0]).unwrap(), loss_mse(&[1.5, 3.0], &[0.2, -1.0]).unwrap());
    assert!(loss_mse(&[0.0], &[1.0, 2.0]).is_err());
}

#[test]
fn zero_net_output_bias_gradient() {
    let spec = build_dnn(4).unwrap();
    let state = ModelState::from_params(spec.clone(), vec![0.0; spec.param_count()], 0).unwrap();
    let x = Tensor::new(vec![3, 4], (0..12).map(|i| i as f64 * 0.1).collect()).unwrap();
    let y = [1.0, -2.0, 4.0];
    let (_, g) = state.loss_and_gradient(&x, &y).unwrap();
    let expected = y.iter().map(|t| 2.0 * (0.0 - t)).sum::<f64>() / 3.0;
    assert_relative_eq!(*g.last().unwrap(), expected, max_relative = 1e-15);
}

#[test]
fn gradient_vanishes_at_exact_fit() {
    let spec = ModelSpec { input_shape: vec![2], layers: vec![LayerSpec::Dense { inputs: 2, outputs: 1 }] };
    let state = ModelState::from_params(spec, vec![1.5, -0.5, 0.25], 0).unwrap();
    let x = Tensor::new(vec![2, 2], vec![1.0, 2.0, -3.0, 0.5]).unwrap();
    let targets: Vec<f64> = state.forward(&x).unwrap().into_data();
    let (loss, g) = state.loss_and_gradient(&x, &targets).unwrap();
    assert_eq!(loss, 0.0);
    assert!(g.iter().all(|&v| v == 0.0));
}

/// Central finite differences of the loss, one coordinate at a time.
pub(crate) fn finite_difference(state: &ModelState, x: &Tensor, y: &[f64], h: f64) -> Vec<f64> {
    let mut probe = state.clone();
    (0..state.params().len())
        .map(|i| {
            let orig = probe.params()[i];
            probe.params_mut()[i] = orig + h;
            let up = loss_mse(probe.forward(x).unwrap().data(), y).unwrap();
            probe.params_mut()[i] = orig - h;
            let down = loss_mse(probe.forward(x).unwrap().data(), y).unwrap();
            probe.params_mut()[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn random_batch(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = Prng::new(seed);
    let len: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..len).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
}

fn assert_gradients_agree(spec: &ModelSpec, seed: u64, batch: usize) {
    let mut state = ModelState::init(spec, seed).unwrap();
    // non-zero biases exercise the bias paths too
    let mut rng = Prng::new(seed ^ 0xB1A5);
    for p in state.params_mut() {
        *p += rng.uniform(-0.1, 0.1);
    }
    let mut shape = vec![batch];
    shape.extend_from_slice(&spec.input_shape);
    let x = random_batch(&shape, seed + 100);
    let y: Vec<f64> = (0..batch).map(|_| rng.uniform(-2.0, 2.0)).collect();
    let (_, analytic) = state.loss_and_gradient(&x, &y).unwrap();
    let numeric = finite_difference(&state, &x, &y, 1e-5);
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        let scale = a.abs().max(n.abs()).max(1e-4);
        assert!((a - n).abs() / scale < 1e-5, "param {i}: analytic {a}, numeric {n}");
    }
}

#[test]
fn gradient_matches_finite_differences_dense() {
    let spec = ModelSpec {
        input_shape: vec![3],
        layers: vec![
            LayerSpec::Dense { inputs: 3, outputs: 5 },
            LayerSpec::Relu,
            LayerSpec::Dense { inputs: 5, outputs: 1 },
        ],
    };
    assert_gradients_agree(&spec, 1, 4);
    assert_gradients_agree(&build_dnn(8).unwrap(), 2, 5);
}

#[test]
fn gradient_matches_finite_differences_conv_pool() {
    let spec = ModelSpec {
        input_shape: vec![2, 6, 7],
        layers: vec![
            LayerSpec::Conv2d { in_channels: 2, out_channels: 3, kernel: 3 },
            LayerSpec::Relu,
            LayerSpec::Conv2d { in_channels: 3, out_channels: 2, kernel: 5 },
            LayerSpec::MaxPool { size: 2 },
            LayerSpec::Flatten,
            LayerSpec::Dense { inputs: 2 * 3 * 3, outputs: 1 },
        ],
    };
    assert_gradients_agree(&spec, 3, 3);
}

#[test]
fn relu_stack_is_positively_homogeneous() {
    let spec = build_dnn(6).unwrap();
    let mut state = ModelState::init(&spec, 4).unwrap();
    // biases are zero after init; use an input with a live path
    let x = random_batch(&[8, 4], 9);
    let base = state.forward(&x).unwrap();
    for alpha in [0.5, 2.0, 7.25] {
        let scaled = Tensor::new(vec![8, 4], x.data().iter().map(|v| v * alpha).collect()).unwrap();
        let out = state.forward(&scaled).unwrap();
        for (a, b) in out.data().iter().zip(base.data()) {
            assert_relative_eq!(*a, alpha * b, max_relative = 1e-12, epsilon = 1e-15);
        }
    }
    state.params_mut()[0] = 0.0;
}

#[test]
fn adam_first_step() {
    let mut adam = AdamState::new(1, AdamConfig::default());
    let mut theta = [0.0];
    adam.step(&mut theta, &[1.0], 1e-3).unwrap();
    assert_eq!(adam.t, 1);
    assert_relative_eq!(theta[0], -9.99999990e-4, max_relative = 1e-9);
    assert_eq!(theta[0], -1e-3 / (1.0 + 1e-8));
}

#[test]
fn adam_two_unit_steps() {
    let mut adam = AdamState::new(1, AdamConfig::default());
    let mut theta = [0.0];
    adam.step(&mut theta, &[1.0], 1e-3).unwrap();
    adam.step(&mut theta, &[1.0], 1e-3).unwrap();
    assert_relative_eq!(theta[0], -2.0 * 1e-3 / (1.0 + 1e-8), max_relative = 1e-12);
}

#[test]
fn adam_zero_gradient_is_a_no_op() {
    let mut adam = AdamState::new(3, AdamConfig::default());
    let mut theta = [0.5, -1.0, 2.0];
    adam.step(&mut theta, &[0.0; 3], 1e-3).unwrap();
    assert_eq!(theta, [0.5, -1.0, 2.0]);
    assert!(adam.v.iter().all(|&v| v >= 0.0));
}

#[test]
fn adam_rejects_non_finite_gradients() {
    let mut adam = AdamState::new(2, AdamConfig::default());
    let mut theta = [0.0, 0.0];
    assert_eq!(adam.step(&mut theta, &[1.0, f64::NAN], 1e-3), Err(NnError::NonFiniteGradient { index: 1 }));
    assert_eq!(adam.t, 0);
    assert!(adam.step(&mut theta, &[1.0], 1e-3).is_err());
}

#[test]
fn activation_pattern_tracks_relu_signs_and_pool_winners() {
    let spec = ModelSpec {
        input_shape: vec![1, 2, 2],
        layers: vec![
            LayerSpec::Conv2d { in_channels: 1, out_channels: 1, kernel: 1 },
            LayerSpec::Relu,
            LayerSpec::MaxPool { size: 2 },
            LayerSpec::Flatten,
            LayerSpec::Dense { inputs: 1, outputs: 1 },
        ],
    };
    let x = Tensor::new(vec![1, 1, 2, 2], vec![-1.0, 2.0, 0.5, -3.0]).unwrap();
    let up = ModelState::from_params(spec.clone(), vec![1.0, 0.0, 1.0, 0.0], 0).unwrap();
    let down = ModelState::from_params(spec, vec![-1.0, 0.0, 1.0, 0.0], 0).unwrap();
    let (a, b) = (up.activation_pattern(&x).unwrap(), down.activation_pattern(&x).unwrap());
    assert_eq!(a.len(), 5);
    assert_eq!(a[..4], [0, 1, 1, 0]);
    assert_eq!(b[..4], [1, 0, 0, 1]);
    assert_ne!(a[4], b[4]);
}
