#![allow(dead_code)]

pub mod quality;
pub mod recurrence;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use secn_core::params::{ParamId, ParamStore};
use secn_core::tensor::Tensor;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

pub fn unit(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(0.0..1.0))
}

/// Adds `N(0, sd²)` noise to every parameter, so zero-initialised heads
/// produce non-trivial outputs.
pub fn jitter(store: &mut ParamStore, sd: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sd).unwrap();
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        let base = store.get(id).clone();
        let t = Tensor::from_fn(base.shape(), |i| base.data()[i] + noise.sample(&mut rng));
        store.set(id, t).unwrap();
    }
}

pub fn zero_all(store: &mut ParamStore) {
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        let z = Tensor::zeros(store.get(id).shape());
        store.set(id, z).unwrap();
    }
}

pub fn max_diff(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data().iter().zip(b.data()).fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()))
}

/// Largest difference between `a(y + dy, x + dx)` and `b(y, x)` over the
/// interior left after dropping `margin` pixels.
pub fn shifted_diff(a: &Tensor, b: &Tensor, dy: usize, dx: usize, margin: usize) -> f64 {
    let (c, h, w) = a.dims3().unwrap();
    let mut m = 0.0f64;
    for ch in 0..c {
        for y in margin..h - margin - dy {
            for x in margin..w - margin - dx {
                m = m.max((a.at3(ch, y + dy, x + dx) - b.at3(ch, y, x)).abs());
            }
        }
    }
    m
}
