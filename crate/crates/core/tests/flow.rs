use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use secn_core::autodiff::gradcheck::check_inputs;
use secn_core::datapipe::{synth_sequence, Motion, SynthSceneConfig};
use secn_core::flow::*;
use secn_core::params::{ParamStore, Session};
use secn_core::tensor::Tensor;

fn scene(h: usize, w: usize, dy: f64, dx: f64, seed: u64) -> Vec<Tensor> {
    let cfg = SynthSceneConfig {
        motion: Motion::Translation { dy, dx },
        frames: 3,
        height: h,
        width: w,
        ..SynthSceneConfig::default()
    };
    synth_sequence(&cfg, seed).unwrap().0
}

fn constant_flow(h: usize, w: usize, fy: f64, fx: f64) -> Tensor {
    Tensor::from_fn(&[2, h, w], |i| if i < h * w { fy } else { fx })
}

fn interior_mse(a: &Tensor, b: &Tensor, margin: usize) -> f64 {
    let (c, h, w) = a.dims3().unwrap();
    let mut sum = 0.0;
    let mut n = 0;
    for ch in 0..c {
        for y in margin..h - margin {
            for x in margin..w - margin {
                let d = a.at3(ch, y, x) - b.at3(ch, y, x);
                sum += d * d;
                n += 1;
            }
        }
    }
    sum / n as f64
}

fn pair_loss(warped: &Tensor, x_t: &Tensor, flow: &Tensor, alpha: f64) -> f64 {
    let mut s = Session::frozen_empty();
    let (a, b, f) = (s.constant(warped.clone()), s.constant(x_t.clone()), s.constant(flow.clone()));
    let l = flow_loss_pair(&mut s, a, b, f, alpha).unwrap();
    s.graph.value(l).item()
}

/// Eq-level oracle: squared photometric error over `c·w·h` plus forward
/// differences of both flow channels over `2·w·h`, summed pixel by pixel.
fn brute_pair_loss(warped: &Tensor, x_t: &Tensor, flow: &Tensor, alpha: f64) -> f64 {
    let (c, h, w) = x_t.dims3().unwrap();
    let mut photo = 0.0;
    for i in 0..warped.len() {
        photo += (warped.data()[i] - x_t.data()[i]).powi(2);
    }
    let mut tv = 0.0;
    for ch in 0..2 {
        for y in 0..h {
            for x in 0..w {
                if x + 1 < w {
                    tv += (flow.at3(ch, y, x + 1) - flow.at3(ch, y, x)).powi(2);
                }
                if y + 1 < h {
                    tv += (flow.at3(ch, y + 1, x) - flow.at3(ch, y, x)).powi(2);
                }
            }
        }
    }
    photo / (c * h * w) as f64 + alpha / (2 * w * h) as f64 * tv
}

fn flow_net(seed: u64) -> (FlowNet, ParamStore) {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = FlowNet::new(&mut store, "flow", 3, &[16, 16, 32, 16, 2], &mut rng).unwrap();
    (net, store)
}

#[test]
fn zero_head_gives_zero_flow_on_identical_frames() {
    let (net, store) = flow_net(1);
    let x = scene(12, 10, 0.0, 0.0, 1).remove(0);
    let f = estimate_flow(&net, &store, &x, &x, 3, 3).unwrap();
    assert_eq!(f.data.shape(), &[2, 12, 10]);
    assert!(f.data.data().iter().all(|&v| v == 0.0));
    assert_eq!((f.source, f.target), (3, 3));
}

#[test]
fn flow_shape_follows_input() {
    let (net, store) = flow_net(2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for (h, w) in [(4, 4), (7, 13), (16, 9)] {
        let a = Tensor::from_fn(&[3, h, w], |_| rng.random());
        let b = Tensor::from_fn(&[3, h, w], |_| rng.random());
        let f = estimate_flow(&net, &store, &a, &b, 1, 2).unwrap();
        assert_eq!(f.data.shape(), &[2, h, w]);
    }
}

#[test]
fn flow_rejects_mismatched_frames() {
    let (net, store) = flow_net(3);
    let a = Tensor::zeros(&[3, 8, 8]);
    let b = Tensor::zeros(&[3, 8, 4]);
    assert!(estimate_flow(&net, &store, &a, &b, 1, 2).is_err());
    assert!(FlowField::new(Tensor::zeros(&[3, 4, 4]), 1, 2).is_err());
    assert!(FlowField::new(Tensor::full(&[2, 4, 4], f64::NAN), 1, 2).is_err());
}

#[test]
fn self_flow_warp_is_exact() {
    let x = scene(16, 16, 0.0, 1.0, 4).remove(1);
    assert_eq!(warp_lr(&x, &FlowField::identity(2, 16, 16)).unwrap(), x);
}

#[test]
fn warp_undoes_synthetic_translation() {
    // frame t+1 shows the content shifted right by one pixel, so sampling it
    // one pixel to the right recovers frame t
    let frames = scene(16, 16, 0.0, 1.0, 5);
    let flow = FlowField::new(constant_flow(16, 16, 0.0, 1.0), 1, 2).unwrap();
    let warped = warp_lr(&frames[1], &flow).unwrap();
    assert!(interior_mse(&warped, &frames[0], 2) < 1e-3);

    let frames = scene(16, 16, -1.0, 0.0, 6);
    let flow = FlowField::new(constant_flow(16, 16, -1.0, 0.0), 1, 2).unwrap();
    assert!(interior_mse(&warp_lr(&frames[1], &flow).unwrap(), &frames[0], 2) < 1e-3);
}

#[test]
fn warp_and_flow_loss_are_differentiable() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let frames = scene(8, 8, 0.0, 1.0, 7);
    let flow = Tensor::from_fn(&[2, 8, 8], |_| rng.random_range(0.2..0.8));
    let errs = check_inputs(&[frames[1].clone(), frames[0].clone(), flow], 1e-5, |g, v| {
        let warped = g.bilinear_sample(v[0], v[2])?;
        let photo = g.mse(warped, v[1])?;
        let tv = g.tv_squared(v[2])?;
        let tv = g.scale(tv, 0.01 / 128.0)?;
        g.add(photo, tv)
    })
    .unwrap();
    for e in errs {
        assert!(e < 1e-6, "{e}");
    }
}

#[test]
fn upsampled_constant_flow_is_scaled() {
    let f = FlowField::new(constant_flow(4, 5, 1.0, 0.0), 2, 1).unwrap();
    let up = upsample_flow_field(&f, 4).unwrap();
    assert_eq!(up.data.shape(), &[2, 16, 20]);
    assert!(up.data.data()[..320].iter().all(|&v| v == 4.0));
    assert!(up.data.data()[320..].iter().all(|&v| v == 0.0));
    assert_eq!((up.source, up.target), (2, 1));

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let g = FlowField::new(Tensor::from_fn(&[2, 3, 4], |_| rng.random_range(-2.0..2.0)), 1, 2).unwrap();
    assert_eq!(upsample_flow_field(&g, 1).unwrap(), g);
    let z = upsample_flow_field(&FlowField::identity(1, 3, 3), 4).unwrap();
    assert_eq!(z.data, Tensor::zeros(&[2, 12, 12]));
}

#[test]
fn upsampled_flow_aligns_hr_frames() {
    // HR frames move 4 px per frame vertically, i.e. one LR pixel
    let hr = scene(64, 64, 4.0, 0.0, 9);
    let lr_flow = FlowField::new(constant_flow(16, 16, 1.0, 0.0), 1, 2).unwrap();
    let hr_flow = upsample_flow_field(&lr_flow, 4).unwrap();
    let warped = warp_lr(&hr[1], &hr_flow).unwrap();
    assert!(interior_mse(&warped, &hr[0], 6) < 1e-12);
    // without the ×r value scaling the alignment is visibly off
    let unscaled = FlowField::new(constant_flow(64, 64, 1.0, 0.0), 1, 2).unwrap();
    assert!(interior_mse(&warp_lr(&hr[1], &unscaled).unwrap(), &hr[0], 6) > 1e-4);
}

#[test]
fn pair_loss_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let x = Tensor::from_fn(&[3, 6, 5], |_| rng.random());
    assert_eq!(pair_loss(&x, &x, &constant_flow(6, 5, 0.3, -1.2), 0.01), 0.0);

    let (h, w) = (6, 5);
    let ramp = Tensor::from_fn(&[2, h, w], |i| if i < h * w { 0.0 } else { (i % w) as f64 });
    let got = pair_loss(&x, &x, &ramp, 0.01);
    let expect = 0.01 * (h * (w - 1)) as f64 / (2 * w * h) as f64;
    assert!((got - expect).abs() < 1e-15);
    assert!((brute_pair_loss(&x, &x, &ramp, 0.01) - expect).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pair_loss_matches_brute_force(h in 1usize..7, w in 1usize..7, alpha in 0.0f64..1.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Tensor::from_fn(&[2, h, w], |_| rng.random());
        let b = Tensor::from_fn(&[2, h, w], |_| rng.random());
        let f = Tensor::from_fn(&[2, h, w], |_| rng.random_range(-3.0..3.0));
        let got = pair_loss(&a, &b, &f, alpha);
        prop_assert!(got >= 0.0);
        prop_assert!((got - brute_pair_loss(&a, &b, &f, alpha)).abs() < 1e-12);
    }

    #[test]
    fn upsampling_commutes_with_constants(fy in -3.0f64..3.0, fx in -3.0f64..3.0, r in 1usize..5) {
        let up = upsample_flow_field(&FlowField::new(constant_flow(3, 4, fy, fx), 1, 2).unwrap(), r).unwrap();
        let expect = constant_flow(3 * r, 4 * r, r as f64 * fy, r as f64 * fx);
        for (u, e) in up.data.data().iter().zip(expect.data()) {
            prop_assert!((u - e).abs() < 1e-12);
        }
    }
}

fn total(values: &[f64], t1: usize) -> secn_core::error::Result<f64> {
    let mut s = Session::frozen_empty();
    let vars: Vec<_> = values.iter().map(|&v| s.constant(Tensor::scalar(v))).collect();
    let l = flow_loss_total(&mut s, &vars, t1)?;
    Ok(s.graph.value(l).item())
}

#[test]
fn total_flow_loss_is_a_plain_mean() {
    assert_eq!(total(&[0.0, 0.0], 1).unwrap(), 0.0);
    assert_eq!(total(&[1.0, 2.0, 3.0, 4.0], 2).unwrap(), 2.5);
    // the γ weight is applied once, by the training loss
    assert!((0.1 * total(&[1.0, 2.0, 3.0, 4.0], 2).unwrap() - 0.25).abs() < 1e-15);
    assert!(total(&[1.0, 2.0, 3.0], 2).is_err());
    assert_eq!(total(&[], 0).unwrap(), 0.0);
}
