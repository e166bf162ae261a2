use rand::Rng;
use secn_core::metrics::SsimConfig;
use secn_core::tensor::Tensor;

use super::{rng, unit};

/// Windowed statistics evaluated pixel by pixel with explicit loops.
pub fn brute_ssim_plane(x: &[f64], y: &[f64], h: usize, w: usize, cfg: &SsimConfig) -> f64 {
    let d = cfg.radius as isize;
    let weight = |i: isize, j: isize| (-((i * i + j * j) as f64) / (2.0 * cfg.rho * cfg.rho)).exp();
    let mut total = 0.0;
    let mut count = 0;
    for cy in d..h as isize - d {
        for cx in d..w as isize - d {
            let at = |v: &[f64], i: isize, j: isize| v[((cy + i) * w as isize + cx + j) as usize];
            let mut wsum = 0.0;
            let (mut mx, mut my) = (0.0, 0.0);
            for i in -d..=d {
                for j in -d..=d {
                    wsum += weight(i, j);
                    mx += weight(i, j) * at(x, i, j);
                    my += weight(i, j) * at(y, i, j);
                }
            }
            mx /= wsum;
            my /= wsum;
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for i in -d..=d {
                for j in -d..=d {
                    let (a, b) = (at(x, i, j) - mx, at(y, i, j) - my);
                    vx += weight(i, j) * a * a;
                    vy += weight(i, j) * b * b;
                    cxy += weight(i, j) * a * b;
                }
            }
            let (vx, vy, cxy) = (vx / wsum, vy / wsum, cxy / wsum);
            total += (2.0 * mx * my + cfg.c1) * (2.0 * cxy + cfg.c2) / ((mx * mx + my * my + cfg.c1) * (vx + vy + cfg.c2));
            count += 1;
        }
    }
    total / count as f64
}

pub fn brute_ssim_image(a: &Tensor, b: &Tensor, cfg: &SsimConfig) -> f64 {
    let (c, h, w) = a.dims3().unwrap();
    let plane = h * w;
    (0..c)
        .map(|ch| brute_ssim_plane(&a.data()[ch * plane..(ch + 1) * plane], &b.data()[ch * plane..(ch + 1) * plane], h, w, cfg))
        .sum::<f64>()
        / c as f64
}

pub fn brute_psnr(a: &[Tensor], b: &[Tensor]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0.0;
    for (x, y) in a.iter().zip(b) {
        let (c, h, w) = x.dims3().unwrap();
        for ch in 0..c {
            for i in 0..h {
                for j in 0..w {
                    sum += (x.at3(ch, i, j) - y.at3(ch, i, j)).powi(2);
                    n += 1.0;
                }
            }
        }
    }
    10.0 * (1.0 / (sum / n)).log10()
}

pub fn noisy_pair(shape: &[usize], seed: u64) -> (Tensor, Tensor) {
    let mut r = rng(seed);
    let a = unit(shape, &mut r);
    let b = Tensor::from_fn(shape, |i| (a.data()[i] + r.random_range(-0.2..0.2)).clamp(0.0, 1.0));
    (a, b)
}

pub fn video(n: usize, shape: &[usize], seed: u64) -> (Vec<Tensor>, Vec<Tensor>) {
    (0..n).map(|i| noisy_pair(shape, seed * 100 + i as u64)).unzip()
}
