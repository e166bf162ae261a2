mod common;

use common::quality::*;
use proptest::prelude::*;
use secn_core::metrics::*;
use secn_core::tensor::Tensor;

#[test]
fn window_weights() {
    let cfg = SsimConfig::default();
    assert_eq!((cfg.radius, cfg.window_size()), (5, 11));
    assert!((cfg.c1 - 1e-4).abs() < 1e-18 && (cfg.c2 - 9e-4).abs() < 1e-18);
    let w = cfg.weights();
    assert_eq!(w.len(), 121);
    let mut total = 0.0;
    for i in -5i32..=5 {
        for j in -5i32..=5 {
            let expect = (-((i * i + j * j) as f64) / 4.5).exp();
            let got = w[((i + 5) * 11 + j + 5) as usize];
            assert!((got - expect).abs() < 1e-15);
            total += expect;
        }
    }
    assert!((w.iter().sum::<f64>() - total).abs() < 1e-12);
    assert!((w.iter().map(|v| v / total).sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn psnr_examples() {
    let (a, _) = noisy_pair(&[3, 12, 12], 1);
    assert_eq!(psnr(&[a.clone()], &[a.clone()], 1.0).unwrap(), 100.0);
    let shifted = a.map(|v| v + 0.1);
    assert!((psnr(&[a.clone()], &[shifted], 1.0).unwrap() - 20.0).abs() < 1e-9);
    assert!(psnr(&[], &[], 1.0).is_err());
    assert!(psnr(&[a.clone()], &[Tensor::zeros(&[3, 12, 11])], 1.0).is_err());
    assert!(psnr(&[a.clone(), a.clone()], &[a], 1.0).is_err());
}

#[test]
fn psnr_matches_brute_force() {
    for seed in 0..5 {
        let (a, b) = video(3, &[3, 10, 14], seed);
        assert!((psnr(&a, &b, 1.0).unwrap() - brute_psnr(&a, &b)).abs() < 1e-10);
    }
}

#[test]
fn psnr_pools_over_the_sequence() {
    let a = vec![Tensor::zeros(&[1, 2, 2]); 2];
    let b = vec![Tensor::full(&[1, 2, 2], 0.1), Tensor::full(&[1, 2, 2], 0.3)];
    let pooled = 20.0 * (1.0 / ((0.01f64 + 0.09) / 2.0).sqrt()).log10();
    assert!((psnr(&a, &b, 1.0).unwrap() - pooled).abs() < 1e-12);
}

#[test]
fn ssim_examples() {
    let cfg = SsimConfig::default();
    let (a, b) = noisy_pair(&[3, 16, 16], 2);
    assert_eq!(ssim_image(&a, &a, &cfg).unwrap(), 1.0);
    let s = ssim_image(&Tensor::zeros(&[1, 12, 12]), &Tensor::full(&[1, 12, 12], 1.0), &cfg).unwrap();
    assert!((s - 1e-4 / (1.0 + 1e-4)).abs() < 1e-15);
    assert!(ssim_image(&a, &b, &cfg).unwrap() < 1.0);
    assert!(ssim_image(&Tensor::zeros(&[1, 10, 20]), &Tensor::zeros(&[1, 10, 20]), &cfg).is_err());
    assert!(ssim_image(&a, &Tensor::zeros(&[3, 16, 15]), &cfg).is_err());
}

#[test]
fn ssim_matches_brute_force() {
    let cfg = SsimConfig::default();
    for seed in 0..5 {
        let (a, b) = noisy_pair(&[3, 14, 17], 10 + seed);
        assert!((ssim_image(&a, &b, &cfg).unwrap() - brute_ssim_image(&a, &b, &cfg)).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ssim_identity_and_symmetry(h in 11usize..16, w in 11usize..16, seed in any::<u64>()) {
        let cfg = SsimConfig::default();
        let (a, b) = noisy_pair(&[2, h, w], seed);
        prop_assert!((ssim_image(&a, &a, &cfg).unwrap() - 1.0).abs() < 1e-12);
        let (ab, ba) = (ssim_image(&a, &b, &cfg).unwrap(), ssim_image(&b, &a, &cfg).unwrap());
        prop_assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn psnr_decreases_with_error_scale(lambda in 1.01f64..5.0, seed in any::<u64>()) {
        let (a, b) = noisy_pair(&[1, 6, 6], seed);
        let scaled = Tensor::from_fn(a.shape(), |i| a.data()[i] + lambda * (b.data()[i] - a.data()[i]));
        prop_assume!(a != b);
        prop_assert!(psnr(&[a.clone()], &[scaled], 1.0).unwrap() < psnr(&[a], &[b], 1.0).unwrap());
    }
}

#[test]
fn ssim_vh_is_mean_over_frames() {
    let cfg = SsimConfig::default();
    let (a, b) = video(2, &[3, 12, 12], 20);
    let s1 = ssim_image(&a[0], &b[0], &cfg).unwrap();
    let s2 = ssim_image(&a[1], &b[1], &cfg).unwrap();
    assert!((ssim_vh(&a, &b, &cfg).unwrap() - (s1 + s2) / 2.0).abs() < 1e-15);
    assert_eq!(ssim_vh(&a, &a, &cfg).unwrap(), 1.0);
}

#[test]
fn ssim_vt_matches_slice_loop() {
    let cfg = SsimConfig::default();
    for seed in 0..5 {
        let (a, b) = video(12, &[2, 13, 6], 30 + seed);
        let mut total = 0.0;
        for x in 0..6 {
            // [C, H, N] image of column x
            let slice = |v: &[Tensor]| Tensor::from_fn(&[2, 13, 12], |i| v[i % 12].at3(i / (13 * 12), i / 12 % 13, x));
            total += brute_ssim_image(&slice(&a), &slice(&b), &cfg);
        }
        assert!((ssim_vt(&a, &b, &cfg).unwrap() - total / 6.0).abs() < 1e-9);
        assert!((ssim_vt(&a, &a, &cfg).unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn ssim_vt_of_static_video_is_one_slice() {
    let cfg = SsimConfig::default();
    let (a, b) = noisy_pair(&[1, 12, 1], 40);
    let va = vec![a.clone(); 11];
    let vb = vec![b.clone(); 11];
    let one = ssim_image(
        &vertical_temporal_slice(&va, 0).unwrap(),
        &vertical_temporal_slice(&vb, 0).unwrap(),
        &cfg,
    )
    .unwrap();
    assert!((ssim_vt(&va, &vb, &cfg).unwrap() - one).abs() < 1e-15);
    assert!(ssim_vt(&va[..10], &vb[..10], &cfg).is_err());
}

#[test]
fn slice_layout() {
    let v: Vec<Tensor> = (0..4).map(|t| Tensor::from_fn(&[2, 3, 5], |i| (100 * t + i) as f64)).collect();
    let s = vertical_temporal_slice(&v, 2).unwrap();
    assert_eq!(s.shape(), &[2, 3, 4]);
    for c in 0..2 {
        for y in 0..3 {
            for t in 0..4 {
                assert_eq!(s.at3(c, y, t), v[t].at3(c, y, 2));
            }
        }
    }
    assert!(vertical_temporal_slice(&v, 5).is_err());
}

#[test]
fn border_crop() {
    let v = vec![Tensor::from_fn(&[1, 20, 20], |i| i as f64)];
    let c = crop_border(&v, 8).unwrap();
    assert_eq!(c[0].shape(), &[1, 4, 4]);
    assert_eq!(c[0].at3(0, 0, 0), v[0].at3(0, 8, 8));
    assert_eq!(crop_border(&v, 0).unwrap(), v);
    assert!(crop_border(&v, 10).is_err());
}

#[test]
fn ttest_examples() {
    let a = [30.0, 31.0, 29.5];
    let r = paired_ttest(&a, &a).unwrap();
    assert_eq!((r.t, r.p), (0.0, 1.0));

    let r = paired_ttest(&[1.0, -1.0], &[0.0, 0.0]).unwrap();
    assert_eq!(r.t, 0.0);
    assert!((r.p - 1.0).abs() < 1e-12);

    let r = paired_ttest(&[1.0, 2.0, 3.0, 4.0], &[0.0; 4]).unwrap();
    let sd = (5.0f64 / 3.0).sqrt();
    assert!((r.t - 2.5 / (sd / 2.0)).abs() < 1e-12);
    assert!((r.t - 3.873).abs() < 1e-3);
    // two-tailed tail of Student t with 3 degrees of freedom at √15
    assert!((r.p - 0.030466291662170977).abs() < 1e-10);

    let r = paired_ttest(&[2.0, 3.0], &[1.0, 2.0]).unwrap();
    assert_eq!((r.t, r.p), (f64::INFINITY, 0.0));
    let r = paired_ttest(&[1.0, 2.0], &[2.0, 3.0]).unwrap();
    assert_eq!((r.t, r.p), (f64::NEG_INFINITY, 0.0));
    assert!(paired_ttest(&[1.0], &[1.0]).is_err());
    assert!(paired_ttest(&[1.0, 2.0], &[1.0]).is_err());
}

fn report(seeds: &[u64], frames: usize) -> MetricReport {
    let cfg = SsimConfig::default();
    MetricReport {
        sequences: seeds
            .iter()
            .map(|&s| {
                let (a, b) = video(frames, &[3, 12, 12], 50 + s);
                SequenceMetrics::evaluate(format!("seq{s}"), &a, &b, 1.0, &cfg).unwrap()
            })
            .collect(),
    }
}

#[test]
fn report_aggregates_are_means() {
    let r = report(&[1, 2, 3], 4);
    let n = r.sequences.len() as f64;
    let seq_mean = r.sequences.iter().map(|s| s.psnr).sum::<f64>() / n;
    let frame_mean = r.sequences.iter().flat_map(|s| s.frame_psnr.clone()).sum::<f64>() / 12.0;
    assert!((r.psnr().sequences - seq_mean).abs() < 1e-12);
    assert!((r.psnr().frames - frame_mean).abs() < 1e-12);
    for s in &r.sequences {
        assert!((s.ssim_vh - s.frame_ssim.iter().sum::<f64>() / 4.0).abs() < 1e-15);
        assert!(s.ssim_vt.is_none());
    }
    let vh = r.ssim_vh();
    assert!((vh.sequences - r.sequences.iter().map(|s| s.ssim_vh).sum::<f64>() / n).abs() < 1e-12);
    assert!(r.ssim_vt().is_none());
    assert!(report(&[4], 11).ssim_vt().is_some());
}

#[test]
fn comparing_identical_reports() {
    let r = report(&[1, 2, 3], 11);
    let rows = r.compare(&r).unwrap();
    assert_eq!(rows.iter().map(|c| c.metric).collect::<Vec<_>>(), vec!["psnr", "ssim_vh", "ssim_vt"]);
    for row in rows {
        assert_eq!((row.test.t, row.test.p), (0.0, 1.0));
        assert_eq!(row.mean, row.baseline_mean);
    }
    assert!(r.compare(&report(&[1, 2], 11)).is_err());
}
