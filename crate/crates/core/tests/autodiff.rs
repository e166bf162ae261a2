use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use secn_core::autodiff::gradcheck::{check_inputs, primitive_suite, relative_error};
use secn_core::autodiff::{self, Activation, Adam, AdamConfig, Graph};
use secn_core::error::Error;
use secn_core::params::ParamStore;
use secn_core::tensor::Tensor;

fn rand_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn eval1(x: &Tensor, f: impl Fn(&mut Graph, secn_core::autodiff::Var) -> secn_core::error::Result<secn_core::autodiff::Var>) -> Tensor {
    let mut g = Graph::new();
    let v = g.constant(x.clone());
    let out = f(&mut g, v).unwrap();
    g.value(out).clone()
}

fn conv(x: &Tensor, w: &Tensor, b: Option<&Tensor>, stride: usize, pad: usize) -> Tensor {
    let mut g = Graph::new();
    let (xv, wv) = (g.constant(x.clone()), g.constant(w.clone()));
    let bv = b.map(|b| g.constant(b.clone()));
    let out = g.conv2d(xv, wv, bv, stride, pad).unwrap();
    g.value(out).clone()
}

fn conv_t(x: &Tensor, w: &Tensor, b: Option<&Tensor>, stride: usize, pad: usize) -> Tensor {
    let mut g = Graph::new();
    let (xv, wv) = (g.constant(x.clone()), g.constant(w.clone()));
    let bv = b.map(|b| g.constant(b.clone()));
    let out = g.conv_transpose2d(xv, wv, bv, stride, pad).unwrap();
    g.value(out).clone()
}

/// Direct-loop cross-correlation with zero padding.
fn naive_conv(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Tensor {
    let (c, h, wd) = x.dims3().unwrap();
    let (d, k) = (w.shape()[0], w.shape()[2]);
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (wd + 2 * pad - k) / stride + 1;
    let mut out = Tensor::zeros(&[d, oh, ow]);
    for o in 0..d {
        for y in 0..oh {
            for xx in 0..ow {
                let mut acc = b.data()[o];
                for ci in 0..c {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (y * stride + ky) as isize - pad as isize;
                            let ix = (xx * stride + kx) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                continue;
                            }
                            acc += x.at3(ci, iy as usize, ix as usize) * w.data()[((o * c + ci) * k + ky) * k + kx];
                        }
                    }
                }
                out.set3(o, y, xx, acc);
            }
        }
    }
    out
}

/// Scatter oracle: every input pixel stamps `v · kernel` at `stride·(y,x) − pad`.
fn naive_conv_t(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Tensor {
    let (c, h, wd) = x.dims3().unwrap();
    let (d, k) = (w.shape()[1], w.shape()[2]);
    let oh = (h - 1) * stride + k - 2 * pad;
    let ow = (wd - 1) * stride + k - 2 * pad;
    let mut out = Tensor::from_fn(&[d, oh, ow], |i| b.data()[i / (oh * ow)]);
    for ci in 0..c {
        for y in 0..h {
            for xx in 0..wd {
                for o in 0..d {
                    for ky in 0..k {
                        for kx in 0..k {
                            let oy = (y * stride + ky) as isize - pad as isize;
                            let ox = (xx * stride + kx) as isize - pad as isize;
                            if oy < 0 || ox < 0 || oy >= oh as isize || ox >= ow as isize {
                                continue;
                            }
                            let v = out.at3(o, oy as usize, ox as usize) + x.at3(ci, y, xx) * w.data()[((ci * d + o) * k + ky) * k + kx];
                            out.set3(o, oy as usize, ox as usize, v);
                        }
                    }
                }
            }
        }
    }
    out
}

fn max_diff(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data().iter().zip(b.data()).fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()))
}

#[test]
fn conv_identity_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = rand_tensor(&[1, 4, 5], &mut rng);
    let y = conv(&x, &Tensor::full(&[1, 1, 1, 1], 1.0), Some(&Tensor::zeros(&[1])), 1, 0);
    assert_eq!(y, x);
}

#[test]
fn conv_all_ones_counts_covered_pixels() {
    let y = conv(&Tensor::full(&[1, 3, 3], 1.0), &Tensor::full(&[1, 1, 3, 3], 1.0), None, 1, 1);
    assert_eq!(y.at3(0, 1, 1), 9.0);
    for (r, c) in [(0, 0), (0, 2), (2, 0), (2, 2)] {
        assert_eq!(y.at3(0, r, c), 4.0);
    }
}

#[test]
fn conv_gradients_on_reference_shape() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let inputs = [rand_tensor(&[2, 5, 5], &mut rng), rand_tensor(&[3, 2, 3, 3], &mut rng), rand_tensor(&[3], &mut rng)];
    let weights = rand_tensor(&[3, 5, 5], &mut rng);
    let errs = check_inputs(&inputs, 1e-5, |g, v| {
        let y = g.conv2d(v[0], v[1], Some(v[2]), 1, 1)?;
        let r = g.constant(weights.clone());
        let p = g.mul(y, r)?;
        g.sum(p)
    })
    .unwrap();
    for e in errs {
        assert!(e < 1e-6, "{e}");
    }
}

#[test]
fn conv_shape_mismatch_reports_shapes() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(&[2, 4, 4]));
    let w = g.constant(Tensor::zeros(&[1, 3, 3, 3]));
    match g.conv2d(x, w, None, 1, 1) {
        Err(Error::Shape { shapes, .. }) => assert!(shapes.contains(&vec![2, 4, 4])),
        other => panic!("expected dimension error, got {other:?}"),
    }
    let w_even = g.constant(Tensor::zeros(&[1, 2, 2, 2]));
    assert!(g.conv2d(x, w_even, None, 1, 0).is_err());
}

#[test]
fn conv_matches_direct_loops() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let (c, d) = (rng.random_range(1..4), rng.random_range(1..4));
        let k = [1, 3, 5][rng.random_range(0..3)];
        let stride = rng.random_range(1..3);
        let pad = rng.random_range(0..=k / 2);
        let (h, w) = (rng.random_range(k..9), rng.random_range(k..9));
        let x = rand_tensor(&[c, h, w], &mut rng);
        let wt = rand_tensor(&[d, c, k, k], &mut rng);
        let b = rand_tensor(&[d], &mut rng);
        let got = conv(&x, &wt, Some(&b), stride, pad);
        assert!(max_diff(&got, &naive_conv(&x, &wt, &b, stride, pad)) < 1e-12, "seed {seed}");
    }
}

#[test]
fn conv_is_linear_in_input() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let x = rand_tensor(&[3, 6, 7], &mut rng);
        let y = rand_tensor(&[3, 6, 7], &mut rng);
        let w = rand_tensor(&[2, 3, 3, 3], &mut rng);
        let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let mix = x.zip_map(&y, |p, q| a * p + b * q).unwrap();
        let lhs = conv(&mix, &w, None, 1, 1);
        let rhs = conv(&x, &w, None, 1, 1).zip_map(&conv(&y, &w, None, 1, 1), |p, q| a * p + b * q).unwrap();
        assert!(max_diff(&lhs, &rhs) < 1e-12);
    }
}

#[test]
fn transpose_conv_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = rand_tensor(&[1, 3, 4], &mut rng);
    assert_eq!(conv_t(&x, &Tensor::full(&[1, 1, 1, 1], 1.0), None, 1, 0), x);

    let v = 0.37;
    let y = conv_t(&Tensor::full(&[1, 1, 1], v), &Tensor::full(&[1, 1, 2, 2], 1.0), None, 2, 0);
    assert_eq!(y.shape(), &[1, 2, 2]);
    assert!(y.data().iter().all(|&o| o == v));

    // a ↑2 layer doubles the extent
    let y = conv_t(&rand_tensor(&[2, 3, 5], &mut rng), &rand_tensor(&[2, 4, 4, 4], &mut rng), None, 2, 1);
    assert_eq!(y.shape(), &[4, 6, 10]);
}

#[test]
fn transpose_conv_matches_scatter_oracle() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let (c, d) = (rng.random_range(1..4), rng.random_range(1..4));
        let stride = rng.random_range(1..3);
        let k = rng.random_range(1..5);
        let pad = if k > 2 { rng.random_range(0..2) } else { 0 };
        let (h, w) = (rng.random_range(2..6), rng.random_range(2..6));
        let x = rand_tensor(&[c, h, w], &mut rng);
        let wt = rand_tensor(&[c, d, k, k], &mut rng);
        let b = rand_tensor(&[d], &mut rng);
        let got = conv_t(&x, &wt, Some(&b), stride, pad);
        assert!(max_diff(&got, &naive_conv_t(&x, &wt, &b, stride, pad)) < 1e-12, "seed {seed}");
    }
}

#[test]
fn transpose_conv_rejects_stride_three() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(&[1, 2, 2]));
    let w = g.constant(Tensor::zeros(&[1, 1, 3, 3]));
    assert!(g.conv_transpose2d(x, w, None, 3, 0).is_err());
}

#[test]
fn pixel_shuffle_layout() {
    let x = Tensor::new(&[4, 1, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let y = autodiff::pixel_shuffle(&x, 2).unwrap();
    assert_eq!(y.shape(), &[1, 2, 2]);
    assert_eq!(y.data(), &[1.0, 2.0, 3.0, 4.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let z = rand_tensor(&[3, 2, 5], &mut rng);
    assert_eq!(autodiff::pixel_shuffle(&z, 1).unwrap(), z);
    assert!(autodiff::pixel_shuffle(&Tensor::zeros(&[3, 2, 2]), 2).is_err());
}

#[test]
fn pixel_shuffle_index_mapping() {
    let (d, s, h, w) = (2, 3, 2, 4);
    let x = Tensor::from_fn(&[d * s * s, h, w], |i| i as f64);
    let y = autodiff::pixel_shuffle(&x, s).unwrap();
    for c in 0..d {
        for dy in 0..s {
            for dx in 0..s {
                for yy in 0..h {
                    for xx in 0..w {
                        assert_eq!(y.at3(c, s * yy + dy, s * xx + dx), x.at3(c * s * s + dy * s + dx, yy, xx));
                    }
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pixel_shuffle_round_trip(d in 1usize..4, s in 1usize..4, h in 1usize..5, w in 1usize..5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rand_tensor(&[d * s * s, h, w], &mut rng);
        let y = autodiff::pixel_shuffle(&x, s).unwrap();
        prop_assert_eq!(autodiff::pixel_unshuffle(&y, s).unwrap(), x);
    }

    #[test]
    fn bilinear_zero_flow_is_identity(c in 1usize..4, h in 1usize..7, w in 1usize..7, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rand_tensor(&[c, h, w], &mut rng);
        prop_assert_eq!(autodiff::bilinear_sample(&x, &Tensor::zeros(&[2, h, w])).unwrap(), x);
    }

    #[test]
    fn sigmoid_is_symmetric(x in -30.0f64..30.0) {
        let s = Activation::Sigmoid.apply(x) + Activation::Sigmoid.apply(-x);
        prop_assert!((s - 1.0).abs() < 1e-15);
    }
}

#[test]
fn bilinear_integer_shift_clamps_at_border() {
    let img = Tensor::from_fn(&[1, 2, 4], |i| (i % 4) as f64);
    let mut flow = Tensor::zeros(&[2, 2, 4]);
    for i in 8..16 {
        flow.data_mut()[i] = 1.0;
    }
    let out = autodiff::bilinear_sample(&img, &flow).unwrap();
    for y in 0..2 {
        let row: Vec<f64> = (0..4).map(|x| out.at3(0, y, x)).collect();
        assert_eq!(row, vec![1.0, 2.0, 3.0, 3.0]);
    }
}

#[test]
fn bilinear_flow_gradient_at_fractional_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let img = rand_tensor(&[2, 6, 6], &mut rng);
        let flow = Tensor::from_fn(&[2, 6, 6], |_| rng.random_range(-1i32..2) as f64 + rng.random_range(0.2..0.8));
        let weights = rand_tensor(&[2, 6, 6], &mut rng);
        let errs = check_inputs(&[img, flow], 1e-5, |g, v| {
            let y = g.bilinear_sample(v[0], v[1])?;
            let r = g.constant(weights.clone());
            let p = g.mul(y, r)?;
            g.sum(p)
        })
        .unwrap();
        assert!(errs[1] < 1e-5, "{errs:?}");
    }
}

#[test]
fn activation_values() {
    assert_eq!(Activation::Sigmoid.apply(0.0), 0.5);
    assert_eq!(Activation::Tanh.apply(0.0), 0.0);
    assert_eq!(Activation::Relu.apply(-1.0), 0.0);
    let x = Tensor::new(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
    assert_eq!(eval1(&x, |g, v| g.relu(v)).data(), &[0.0, 0.0, 2.0]);
}

#[test]
fn mse_values_and_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let a = rand_tensor(&[2, 3, 4], &mut rng);
    let mut g = Graph::new();
    let (av, bv) = (g.constant(a.clone()), g.constant(a.clone()));
    let l = g.mse(av, bv).unwrap();
    assert_eq!(g.value(l).item(), 0.0);

    let b = a.map(|v| v - 0.1);
    let mut g = Graph::new();
    let (av, bv) = (g.param(a.clone()), g.constant(b.clone()));
    let l = g.mse(av, bv).unwrap();
    assert!((g.value(l).item() - 0.01).abs() < 1e-15);
    g.backward(l).unwrap();
    let expect = a.zip_map(&b, |x, y| 2.0 * (x - y) / 24.0).unwrap();
    assert!(max_diff(g.grad(av).unwrap(), &expect) < 1e-15);

    let mut g = Graph::new();
    let (av, bv) = (g.constant(a), g.constant(Tensor::zeros(&[2, 3, 3])));
    assert!(matches!(g.mse(av, bv), Err(Error::Shape { .. })));
}

#[test]
fn primitive_suite_passes() {
    for seed in [11, 12] {
        for check in primitive_suite(seed, 20).unwrap() {
            assert!(check.passed(), "{check:?}");
            assert_eq!(check.draws, 20);
        }
    }
}

#[test]
fn backward_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = rand_tensor(&[2, 3], &mut rng);
    let mut g = Graph::new();
    let v = g.param(x.clone());
    let s = g.sum(v).unwrap();
    g.backward(s).unwrap();
    assert!(g.grad(v).unwrap().data().iter().all(|&d| d == 1.0));

    let mut g = Graph::new();
    let v = g.param(x.clone());
    let sq = g.mul(v, v).unwrap();
    let s = g.sum(sq).unwrap();
    g.backward(s).unwrap();
    assert_eq!(g.grad(v).unwrap(), &x.scale(2.0));
}

#[test]
fn backward_errors() {
    let mut g = Graph::new();
    let v = g.param(Tensor::full(&[3], 1.0));
    let s = g.sum(v).unwrap();
    g.backward(s).unwrap();
    assert!(matches!(g.backward(s), Err(Error::Graph(_))));
    g.reset_grads();
    g.backward(s).unwrap();

    let mut g = Graph::new();
    let v = g.param(Tensor::full(&[3], 1.0));
    let y = g.scale(v, 2.0).unwrap();
    assert!(matches!(g.backward(y), Err(Error::Graph(_))));

    let mut g = Graph::new();
    let c = g.constant(Tensor::full(&[3], 1.0));
    let s = g.sum(c).unwrap();
    assert!(matches!(g.backward(s), Err(Error::Graph(_))));
}

#[test]
fn reused_value_accumulates_both_paths() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = rand_tensor(&[2, 4, 4], &mut rng);
    let w = rand_tensor(&[2, 2, 3, 3], &mut rng);
    // loss = sum(conv(x)) + sum(tanh(x))
    let grad_of = |paths: (bool, bool)| {
        let mut g = Graph::new();
        let xv = g.param(x.clone());
        let wv = g.constant(w.clone());
        let mut terms = Vec::new();
        if paths.0 {
            let c = g.conv2d(xv, wv, None, 1, 1).unwrap();
            terms.push(g.sum(c).unwrap());
        }
        if paths.1 {
            let t = g.tanh(xv).unwrap();
            terms.push(g.sum(t).unwrap());
        }
        let loss = terms.iter().skip(1).fold(terms[0], |a, &b| g.add(a, b).unwrap());
        g.backward(loss).unwrap();
        g.grad(xv).unwrap().clone()
    };
    let both = grad_of((true, true));
    let split = grad_of((true, false)).zip_map(&grad_of((false, true)), |a, b| a + b).unwrap();
    assert!(max_diff(&both, &split) < 1e-14);
}

#[test]
fn detached_values_get_no_gradient() {
    let mut g = Graph::new();
    let x = g.param(Tensor::full(&[2], 3.0));
    let d = g.detach(x);
    let y = g.mul(x, d).unwrap();
    let s = g.sum(y).unwrap();
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap().data(), &[3.0, 3.0]);
}

fn single_param(value: f64) -> (ParamStore, secn_core::params::ParamId) {
    let mut store = ParamStore::new();
    let id = store.add("x", Tensor::scalar(value)).unwrap();
    (store, id)
}

#[test]
fn adam_first_step_moves_by_lr() {
    let cfg = AdamConfig { lr: 1e-3, ..AdamConfig::default() };
    for g in [0.5, -3.0, 1e-3] {
        let (mut store, id) = single_param(1.0);
        let mut adam = Adam::new(cfg);
        adam.step(&mut store, &[(id, Tensor::scalar(g))]).unwrap();
        let moved = 1.0 - store.get(id).item();
        let expect = cfg.lr * g / (g.abs() + cfg.eps);
        assert!((moved - expect).abs() < 1e-15);
        assert!((moved.abs() - cfg.lr).abs() < 1e-7);
        assert_eq!(adam.state(id).unwrap().step, 1);
    }
}

#[test]
fn adam_zero_gradient_keeps_parameters() {
    let (mut store, id) = single_param(0.7);
    let mut adam = Adam::new(AdamConfig::default());
    for _ in 0..3 {
        adam.step(&mut store, &[(id, Tensor::scalar(0.0))]).unwrap();
    }
    assert_eq!(store.get(id).item(), 0.7);
}

#[test]
fn adam_descends_a_parabola() {
    let (mut store, id) = single_param(1.0);
    let mut adam = Adam::new(AdamConfig { lr: 0.1, ..AdamConfig::default() });
    // hand trace: step 1 moves by lr; step 2 by lr·m̂/√v̂ with m̂≈1.89, √v̂≈1.90
    let mut prev = 1.0;
    for _ in 0..2 {
        let x = store.get(id).item();
        adam.step(&mut store, &[(id, Tensor::scalar(2.0 * x))]).unwrap();
        let now = store.get(id).item();
        assert!(now < prev);
        prev = now;
    }
    assert!((prev - 0.8).abs() < 1e-3, "{prev}");
}

#[test]
fn adam_rejects_non_finite_gradient_by_name() {
    let mut store = ParamStore::new();
    let id = store.add("lffn.output.weight", Tensor::scalar(1.0)).unwrap();
    let mut adam = Adam::new(AdamConfig::default());
    let err = adam.step(&mut store, &[(id, Tensor::scalar(f64::NAN))]).unwrap_err();
    assert!(matches!(&err, Error::Training(m) if m.contains("lffn.output.weight")));
    assert_eq!(store.get(id).item(), 1.0);
}

#[test]
fn relative_error_is_normwise() {
    assert_eq!(relative_error(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
    assert!((relative_error(&[1.0, 0.0], &[1.0, 1e-6]) - 1e-6).abs() < 1e-18);
}
