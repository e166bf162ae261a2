//! Synthetic scenes, the blur-and-decimate degradation, training-clip
//! augmentation and a bicubic baseline.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math;
use crate::tensor::Tensor;

/// Paired LR inputs and HR ground truth of equal length.
#[derive(Clone, Debug, PartialEq)]
pub struct Clip {
    pub lr: Vec<Tensor>,
    pub hr: Vec<Tensor>,
}

impl Clip {
    pub fn len(&self) -> usize {
        self.lr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lr.is_empty()
    }
}

/// Deterministic RNG stream for `(seed, worker, epoch)`.
pub fn stream_rng(seed: u64, worker: u32, epoch: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((worker as u64) << 32) | epoch as u64);
    rng
}

/// Normalised 1-D Gaussian taps for offsets `−radius…radius`.
pub fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    let r = radius as isize;
    let taps: Vec<f64> = (-r..=r)
        .map(|i| math::exp(-((i * i) as f64) / (2.0 * sigma * sigma)))
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Mirror index without repeating the edge sample (`−1 → 1`).
pub fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    (if m < n as isize { m } else { period - m }) as usize
}

/// Separable Gaussian blur with reflected borders.
pub fn gaussian_blur(image: &Tensor, sigma: f64, radius: usize) -> Result<Tensor> {
    let (c, h, w) = image.dims3()?;
    let k = gaussian_kernel(sigma, radius);
    let r = radius as isize;
    let src = image.data();
    let mut tmp = vec![0.0; c * h * w];
    for ch in 0..c {
        for y in 0..h {
            let row = &src[(ch * h + y) * w..(ch * h + y + 1) * w];
            for x in 0..w {
                let mut acc = 0.0;
                for (j, &kj) in k.iter().enumerate() {
                    acc += kj * row[reflect(x as isize + j as isize - r, w)];
                }
                tmp[(ch * h + y) * w + x] = acc;
            }
        }
    }
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        for y in 0..h {
            for (j, &kj) in k.iter().enumerate() {
                let sy = reflect(y as isize + j as isize - r, h);
                let src_row = (ch * h + sy) * w;
                let dst_row = (ch * h + y) * w;
                for x in 0..w {
                    out[dst_row + x] += kj * tmp[src_row + x];
                }
            }
        }
    }
    Tensor::new(&[c, h, w], out)
}

/// Keeps pixel `(r·y + phase, r·x + phase)` of every `r × r` cell.
pub fn decimate(image: &Tensor, r: usize, phase: usize) -> Result<Tensor> {
    let (c, h, w) = image.dims3()?;
    if r == 0 || phase >= r {
        return Err(Error::invalid(format!("decimation needs 0 ≤ phase < r, got phase {phase}, r {r}")));
    }
    let (oh, ow) = (h / r, w / r);
    let mut out = Tensor::zeros(&[c, oh, ow]);
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                out.set3(ch, y, x, image.at3(ch, r * y + phase, r * x + phase));
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DegradeConfig {
    pub sigma: f64,
    pub radius: usize,
    pub factor: usize,
    pub phase: usize,
}

impl Default for DegradeConfig {
    fn default() -> Self {
        DegradeConfig {
            sigma: 1.5,
            radius: 5,
            factor: 4,
            phase: 0,
        }
    }
}

pub fn degrade_frame(hr: &Tensor, cfg: &DegradeConfig) -> Result<Tensor> {
    let blurred = gaussian_blur(hr, cfg.sigma, cfg.radius)?;
    decimate(&blurred, cfg.factor, cfg.phase)
}

pub fn degrade_sequence(hr: &[Tensor], cfg: &DegradeConfig) -> Result<Vec<Tensor>> {
    hr.iter().map(|f| degrade_frame(f, cfg)).collect()
}

/// Keys cubic convolution weight with `a = −0.5`.
fn cubic(t: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        (1.5 * t - 2.5) * t * t + 1.0
    } else if t < 2.0 {
        ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0
    } else {
        0.0
    }
}

/// Bicubic ×`r` upsampling. HR pixel `Y` samples LR coordinate `Y / r`,
/// matching decimation at phase 0; borders are clamped.
pub fn bicubic_upsample(image: &Tensor, r: usize) -> Result<Tensor> {
    let (c, h, w) = image.dims3()?;
    let (oh, ow) = (h * r, w * r);
    let taps = |n_out: usize, n_in: usize| -> Vec<[(usize, f64); 4]> {
        (0..n_out)
            .map(|o| {
                let pos = o as f64 / r as f64;
                let base = math::floor(pos) as isize;
                let frac = pos - base as f64;
                let mut t = [(0usize, 0.0); 4];
                for (i, slot) in t.iter_mut().enumerate() {
                    let off = i as isize - 1;
                    let idx = (base + off).clamp(0, n_in as isize - 1) as usize;
                    *slot = (idx, cubic(frac - off as f64));
                }
                t
            })
            .collect()
    };
    let ty = taps(oh, h);
    let tx = taps(ow, w);
    let mut out = Tensor::zeros(&[c, oh, ow]);
    for ch in 0..c {
        for (y, wy) in ty.iter().enumerate() {
            for (x, wx) in tx.iter().enumerate() {
                let mut acc = 0.0;
                for &(iy, ay) in wy {
                    for &(ix, ax) in wx {
                        acc += ay * ax * image.at3(ch, iy, ix);
                    }
                }
                out.set3(ch, y, x, acc);
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Pattern {
    Checkerboard { period: f64 },
    Gradient,
    TexturedBlob,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Motion {
    /// Constant velocity in HR pixels per frame.
    Translation { dy: f64, dx: f64 },
    /// Sinusoidal drift `amp · sin(2π t / period)` on each axis.
    Drift { amp_y: f64, amp_x: f64, period: f64 },
}

impl Motion {
    /// Content displacement of frame `t` (0-based) relative to frame 0.
    pub fn offset(&self, t: usize) -> (f64, f64) {
        let t = t as f64;
        match *self {
            Motion::Translation { dy, dx } => (dy * t, dx * t),
            Motion::Drift { amp_y, amp_x, period } => {
                let s = math::sin(2.0 * core::f64::consts::PI * t / period);
                (amp_y * s, amp_x * s)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthSceneConfig {
    pub pattern: Pattern,
    pub motion: Motion,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Default for SynthSceneConfig {
    fn default() -> Self {
        SynthSceneConfig {
            pattern: Pattern::TexturedBlob,
            motion: Motion::Translation { dy: 0.0, dx: 4.0 },
            frames: 8,
            height: 64,
            width: 64,
            channels: 3,
        }
    }
}

/// True per-frame content displacement (HR pixels) of a synthetic sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthMeta {
    pub offsets: Vec<(f64, f64)>,
}

struct Blob {
    cy: f64,
    cx: f64,
    sigma: f64,
    color: [f64; 3],
}

struct Wave {
    ky: f64,
    kx: f64,
    phase: f64,
    amp: [f64; 3],
}

/// Renders an analytic pattern, translated per frame by the motion model.
/// Output frames are `[channels, height, width]` in `[0, 1]`.
pub fn synth_sequence(cfg: &SynthSceneConfig, seed: u64) -> Result<(Vec<Tensor>, SynthMeta)> {
    if cfg.channels == 0 || cfg.channels > 3 || cfg.frames == 0 || cfg.height == 0 || cfg.width == 0 {
        return Err(Error::invalid("synthetic scenes need 1–3 channels and positive extents"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (cfg.height as f64, cfg.width as f64);
    let color = |rng: &mut ChaCha8Rng| [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
    let base = color(&mut rng);
    let blobs: Vec<Blob> = (0..12)
        .map(|_| Blob {
            cy: rng.random_range(-0.2..1.2) * h,
            cx: rng.random_range(-0.2..1.2) * w,
            sigma: rng.random_range(0.03..0.15) * h.min(w),
            color: color(&mut rng),
        })
        .collect();
    let waves: Vec<Wave> = (0..8)
        .map(|_| {
            let freq = rng.random_range(0.1..1.0);
            let angle = rng.random_range(0.0..core::f64::consts::PI);
            Wave {
                ky: freq * math::sin(angle),
                kx: freq * math::sin(angle + core::f64::consts::FRAC_PI_2),
                phase: rng.random_range(0.0..2.0 * core::f64::consts::PI),
                amp: [
                    rng.random_range(0.02..0.08),
                    rng.random_range(0.02..0.08),
                    rng.random_range(0.02..0.08),
                ],
            }
        })
        .collect();
    let hue = [color(&mut rng), color(&mut rng)];
    let pattern = cfg.pattern;
    let value = |ch: usize, y: f64, x: f64| -> f64 {
        let v = match pattern {
            Pattern::Checkerboard { period } => {
                let cell = (math::floor(y / period) + math::floor(x / period)) as i64;
                if cell.rem_euclid(2) == 0 {
                    0.2 + 0.6 * hue[0][ch]
                } else {
                    0.2 + 0.6 * hue[1][ch]
                }
            }
            Pattern::Gradient => {
                let t = 0.5 + 0.5 * math::sin(0.07 * (y + 0.6 * x) + base[ch] * 6.0);
                0.1 + 0.8 * t
            }
            Pattern::TexturedBlob => {
                let mut v = 0.25 + 0.3 * base[ch];
                for b in &blobs {
                    let d2 = (y - b.cy) * (y - b.cy) + (x - b.cx) * (x - b.cx);
                    v += 0.35 * (b.color[ch] - 0.5) * math::exp(-d2 / (2.0 * b.sigma * b.sigma));
                }
                for wv in &waves {
                    v += wv.amp[ch] * math::sin(wv.ky * y + wv.kx * x + wv.phase);
                }
                v
            }
        };
        v.clamp(0.0, 1.0)
    };
    let mut frames = Vec::with_capacity(cfg.frames);
    let mut offsets = Vec::with_capacity(cfg.frames);
    for t in 0..cfg.frames {
        let (oy, ox) = cfg.motion.offset(t);
        offsets.push((oy, ox));
        let mut f = Tensor::zeros(&[cfg.channels, cfg.height, cfg.width]);
        for ch in 0..cfg.channels {
            for y in 0..cfg.height {
                for x in 0..cfg.width {
                    f.set3(ch, y, x, value(ch, y as f64 - oy, x as f64 - ox));
                }
            }
        }
        frames.push(f);
    }
    Ok((frames, SynthMeta { offsets }))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentConfig {
    pub n_frames: usize,
    /// Inclusive range of the temporal sampling stride.
    pub stride_range: (usize, usize),
    /// HR crop edge; rounded to the scale grid.
    pub crop: usize,
    pub random_crop: bool,
    pub reverse: bool,
    pub flip: bool,
    pub shuffle: bool,
}

impl AugmentConfig {
    /// Every random choice switched off: first `n` frames, centred crop.
    pub fn deterministic(n_frames: usize, crop: usize) -> Self {
        AugmentConfig {
            n_frames,
            stride_range: (1, 1),
            crop,
            random_crop: false,
            reverse: false,
            flip: false,
            shuffle: false,
        }
    }

    pub fn facial(n_frames: usize, crop: usize) -> Self {
        AugmentConfig {
            n_frames,
            stride_range: (1, 2),
            crop,
            random_crop: true,
            reverse: true,
            flip: true,
            shuffle: true,
        }
    }
}

/// Cuts one augmented HR clip out of `sequence` and degrades it. Returns
/// `None` when the sequence has fewer than `n_frames` frames.
pub fn augment_clip(sequence: &[Tensor], cfg: &AugmentConfig, degrade: &DegradeConfig, rng: &mut impl Rng) -> Result<Option<Clip>> {
    let n = cfg.n_frames;
    if n == 0 || sequence.len() < n {
        log::warn!("skipping sequence of {} frames (clip needs {n})", sequence.len());
        return Ok(None);
    }
    let (lo, hi) = cfg.stride_range;
    let mut stride = if hi > lo { rng.random_range(lo..=hi) } else { lo.max(1) };
    // largest stride whose window still fits
    stride = stride.min((sequence.len() - 1) / (n - 1).max(1)).max(1);
    let span = (n - 1) * stride + 1;
    let start = if cfg.random_crop || cfg.shuffle {
        rng.random_range(0..=sequence.len() - span)
    } else {
        0
    };
    let (_, h, w) = sequence[0].dims3()?;
    let r = degrade.factor;
    let crop = cfg.crop / r * r;
    if crop == 0 || crop > h || crop > w {
        return Err(Error::invalid(format!("crop {} does not fit {h}×{w} frames", cfg.crop)));
    }
    let (y0, x0) = if cfg.random_crop {
        (rng.random_range(0..=(h - crop) / r) * r, rng.random_range(0..=(w - crop) / r) * r)
    } else {
        ((h - crop) / 2 / r * r, (w - crop) / 2 / r * r)
    };
    let reverse = cfg.reverse && rng.random_bool(0.5);
    let flip = cfg.flip && rng.random_bool(0.5);
    let mut hr = Vec::with_capacity(n);
    for i in 0..n {
        let mut f = sequence[start + i * stride].crop(y0, x0, crop, crop)?;
        if flip {
            f = f.flip_horizontal()?;
        }
        hr.push(f);
    }
    if reverse {
        hr.reverse();
    }
    let lr = degrade_sequence(&hr, degrade)?;
    Ok(Some(Clip { lr, hr }))
}

/// Draws training batches, visiting the dataset in a fresh random order
/// each epoch.
#[derive(Clone, Debug)]
pub struct BatchSampler {
    order: Vec<usize>,
    pos: usize,
    started: bool,
    /// Zero-based index of the pass currently being drawn.
    pub epoch: usize,
}

impl BatchSampler {
    pub fn new(len: usize) -> Self {
        BatchSampler {
            order: (0..len).collect(),
            pos: len,
            started: false,
            epoch: 0,
        }
    }

    fn next_index(&mut self, shuffle: bool, rng: &mut impl Rng) -> usize {
        if self.pos >= self.order.len() {
            if shuffle {
                self.order.shuffle(rng);
            }
            if self.started {
                self.epoch += 1;
            }
            self.started = true;
            self.pos = 0;
        }
        self.pos += 1;
        self.order[self.pos - 1]
    }

    /// `batch` augmented clips; sequences too short for a clip are skipped.
    pub fn augment_batch(
        &mut self,
        dataset: &[Vec<Tensor>],
        batch: usize,
        cfg: &AugmentConfig,
        degrade: &DegradeConfig,
        rng: &mut impl Rng,
    ) -> Result<Vec<Clip>> {
        if dataset.is_empty() {
            return Err(Error::invalid("empty training set"));
        }
        let mut clips = Vec::with_capacity(batch);
        let mut misses = 0;
        while clips.len() < batch {
            let idx = self.next_index(cfg.shuffle, rng);
            match augment_clip(&dataset[idx], cfg, degrade, rng)? {
                Some(c) => clips.push(c),
                None => {
                    misses += 1;
                    if misses > dataset.len() {
                        return Err(Error::invalid("no sequence is long enough for a training clip"));
                    }
                }
            }
        }
        Ok(clips)
    }
}

/// Convenience: one pass of `augment_batch` with a fresh sampler.
pub fn augment_batch(dataset: &[Vec<Tensor>], batch: usize, cfg: &AugmentConfig, degrade: &DegradeConfig, rng: &mut impl Rng) -> Result<Vec<Clip>> {
    let mut sampler = BatchSampler::new(dataset.len());
    sampler.augment_batch(dataset, batch, cfg, degrade, rng)
}
