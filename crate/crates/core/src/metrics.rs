//! PSNR, windowed SSIM (per frame and on vertical–temporal slices) and the
//! paired t-test used to compare methods.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::stats;
use crate::tensor::Tensor;

pub const PSNR_CAP: f64 = 100.0;

/// Gaussian-window SSIM settings for signals with dynamic range `range`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimConfig {
    pub radius: usize,
    pub rho: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self::for_range(1.0)
    }
}

impl SsimConfig {
    pub fn for_range(range: f64) -> Self {
        SsimConfig {
            radius: 5,
            rho: 1.5,
            c1: (0.01 * range) * (0.01 * range),
            c2: (0.03 * range) * (0.03 * range),
        }
    }

    pub fn window_size(&self) -> usize {
        2 * self.radius + 1
    }

    /// Unnormalised 2-D weights `exp(−(i² + j²) / (2ρ²))`, row-major.
    pub fn weights(&self) -> Vec<f64> {
        let g = self.profile();
        g.iter().flat_map(|a| g.iter().map(move |b| a * b)).collect()
    }

    /// 1-D profile whose outer product is [`SsimConfig::weights`].
    fn profile(&self) -> Vec<f64> {
        let r = self.radius as isize;
        (-r..=r)
            .map(|i| math::exp(-((i * i) as f64) / (2.0 * self.rho * self.rho)))
            .collect()
    }
}

fn check_pair(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, &[a.shape(), b.shape()], "shapes differ"));
    }
    Ok(())
}

fn check_sequences(op: &'static str, y: &[Tensor], g: &[Tensor]) -> Result<()> {
    if y.is_empty() || y.len() != g.len() {
        return Err(Error::invalid(format!(
            "{op}: need two non-empty sequences of equal length, got {} and {}",
            y.len(),
            g.len()
        )));
    }
    y.iter().zip(g).try_for_each(|(a, b)| check_pair(op, a, b))
}

fn psnr_from_mse(mse: f64, range: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP;
    }
    (20.0 * math::log10(range / math::sqrt(mse))).min(PSNR_CAP)
}

/// PSNR with the squared error pooled over the whole sequence.
pub fn psnr(y: &[Tensor], g: &[Tensor], range: f64) -> Result<f64> {
    check_sequences("psnr", y, g)?;
    let mut total = 0.0;
    let mut count = 0usize;
    for (a, b) in y.iter().zip(g) {
        total += a.data().iter().zip(b.data()).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
        count += a.len();
    }
    Ok(psnr_from_mse(total / count as f64, range))
}

pub fn psnr_frame(y: &Tensor, g: &Tensor, range: f64) -> Result<f64> {
    psnr(core::slice::from_ref(y), core::slice::from_ref(g), range)
}

/// Mean SSIM over all window positions that fit entirely inside one plane.
pub fn ssim_plane(y: &[f64], g: &[f64], h: usize, w: usize, cfg: &SsimConfig) -> Result<f64> {
    let n = cfg.window_size();
    if h < n || w < n {
        return Err(Error::invalid(format!("image {h}×{w} is smaller than the {n}×{n} SSIM window")));
    }
    let prof = cfg.profile();
    let sum: f64 = prof.iter().sum();
    let norm = sum * sum;
    let (oh, ow) = (h - n + 1, w - n + 1);
    // horizontal pass then vertical pass over the five local moments
    let mut rows = vec![[0.0f64; 5]; h * ow];
    for yy in 0..h {
        for xx in 0..ow {
            let mut acc = [0.0; 5];
            for (j, &wt) in prof.iter().enumerate() {
                let i = yy * w + xx + j;
                let (a, b) = (y[i], g[i]);
                acc[0] += wt * a;
                acc[1] += wt * b;
                acc[2] += wt * a * a;
                acc[3] += wt * b * b;
                acc[4] += wt * a * b;
            }
            rows[yy * ow + xx] = acc;
        }
    }
    let mut total = 0.0;
    for yy in 0..oh {
        for xx in 0..ow {
            let mut m = [0.0; 5];
            for (i, &wt) in prof.iter().enumerate() {
                let r = &rows[(yy + i) * ow + xx];
                for q in 0..5 {
                    m[q] += wt * r[q];
                }
            }
            for v in &mut m {
                *v /= norm;
            }
            total += ssim_from_moments(m, cfg);
        }
    }
    Ok(total / (oh * ow) as f64)
}

/// `[μx, μy, E x², E y², E xy]` → local SSIM.
fn ssim_from_moments(m: [f64; 5], cfg: &SsimConfig) -> f64 {
    let [mx, my, xx, yy, xy] = m;
    let vx = xx - mx * mx;
    let vy = yy - my * my;
    let cov = xy - mx * my;
    ((2.0 * mx * my + cfg.c1) * (2.0 * cov + cfg.c2)) / ((mx * mx + my * my + cfg.c1) * (vx + vy + cfg.c2))
}

/// SSIM of two `[C,H,W]` images, averaged over channels.
pub fn ssim_image(y: &Tensor, g: &Tensor, cfg: &SsimConfig) -> Result<f64> {
    check_pair("ssim_image", y, g)?;
    let (c, h, w) = y.dims3()?;
    let plane = h * w;
    let mut total = 0.0;
    for ch in 0..c {
        let r = ch * plane..(ch + 1) * plane;
        total += ssim_plane(&y.data()[r.clone()], &g.data()[r], h, w, cfg)?;
    }
    Ok(total / c as f64)
}

/// Mean per-frame SSIM.
pub fn ssim_vh(y: &[Tensor], g: &[Tensor], cfg: &SsimConfig) -> Result<f64> {
    check_sequences("ssim_vh", y, g)?;
    let mut total = 0.0;
    for (a, b) in y.iter().zip(g) {
        total += ssim_image(a, b, cfg)?;
    }
    Ok(total / y.len() as f64)
}

/// Image spanned by the vertical and temporal axes at column `x`: `[C,H,N]`.
pub fn vertical_temporal_slice(video: &[Tensor], x: usize) -> Result<Tensor> {
    let first = video.first().ok_or_else(|| Error::invalid("empty video"))?;
    let (c, h, w) = first.dims3()?;
    if x >= w {
        return Err(Error::invalid(format!("column {x} outside width {w}")));
    }
    if let Some(f) = video.iter().find(|f| f.shape() != first.shape()) {
        return Err(Error::shape("vertical_temporal_slice", &[first.shape(), f.shape()], "frame shapes differ"));
    }
    let n = video.len();
    let mut out = Tensor::zeros(&[c, h, n]);
    for (t, frame) in video.iter().enumerate() {
        for ch in 0..c {
            for y in 0..h {
                out.set3(ch, y, t, frame.at3(ch, y, x));
            }
        }
    }
    Ok(out)
}

/// Mean SSIM over the vertical–temporal slices, one per column. Needs more
/// frames than the window size.
pub fn ssim_vt(y: &[Tensor], g: &[Tensor], cfg: &SsimConfig) -> Result<f64> {
    check_sequences("ssim_vt", y, g)?;
    if y.len() < cfg.window_size() {
        return Err(Error::invalid(format!(
            "ssim_vt needs at least {} frames, got {}",
            cfg.window_size(),
            y.len()
        )));
    }
    let (_, _, w) = y[0].dims3()?;
    let mut total = 0.0;
    for x in 0..w {
        let a = vertical_temporal_slice(y, x)?;
        let b = vertical_temporal_slice(g, x)?;
        total += ssim_image(&a, &b, cfg)?;
    }
    Ok(total / w as f64)
}

/// Drops `border` pixels from every side of every frame.
pub fn crop_border(frames: &[Tensor], border: usize) -> Result<Vec<Tensor>> {
    frames
        .iter()
        .map(|f| {
            let (_, h, w) = f.dims3()?;
            if 2 * border >= h.min(w) {
                return Err(Error::invalid(format!("border {border} leaves nothing of a {h}×{w} frame")));
            }
            f.crop(border, border, h - 2 * border, w - 2 * border)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub n: usize,
}

/// Paired two-tailed Student t-test on `a[i] − b[i]`.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::invalid(format!(
            "paired t-test needs two samples of equal length ≥ 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    let sd = math::sqrt(var);
    if sd == 0.0 {
        return Ok(if mean == 0.0 {
            TTest { t: 0.0, p: 1.0, n }
        } else {
            TTest {
                t: if mean > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY },
                p: 0.0,
                n,
            }
        });
    }
    let t = mean / (sd / math::sqrt(n as f64));
    Ok(TTest {
        t,
        p: stats::t_two_tailed(t, (n - 1) as f64),
        n,
    })
}

/// Scores of one predicted sequence against its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceMetrics {
    pub name: String,
    pub psnr: f64,
    pub ssim_vh: f64,
    /// `None` when the sequence is too short for temporal slices.
    pub ssim_vt: Option<f64>,
    pub frame_psnr: Vec<f64>,
    pub frame_ssim: Vec<f64>,
}

impl SequenceMetrics {
    pub fn evaluate(name: impl Into<String>, pred: &[Tensor], gt: &[Tensor], range: f64, cfg: &SsimConfig) -> Result<Self> {
        check_sequences("evaluate", pred, gt)?;
        let frame_psnr = pred
            .iter()
            .zip(gt)
            .map(|(a, b)| psnr_frame(a, b, range))
            .collect::<Result<Vec<_>>>()?;
        let frame_ssim = pred
            .iter()
            .zip(gt)
            .map(|(a, b)| ssim_image(a, b, cfg))
            .collect::<Result<Vec<_>>>()?;
        let ssim_vt = if pred.len() >= cfg.window_size() {
            Some(ssim_vt(pred, gt, cfg)?)
        } else {
            None
        };
        Ok(SequenceMetrics {
            name: name.into(),
            psnr: psnr(pred, gt, range)?,
            ssim_vh: mean(&frame_ssim),
            ssim_vt,
            frame_psnr,
            frame_ssim,
        })
    }
}

/// Per-sequence scores plus two aggregates per metric: `frames` averages
/// every frame of every sequence, `sequences` averages per-sequence values.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricReport {
    pub sequences: Vec<SequenceMetrics>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aggregate {
    pub frames: f64,
    pub sequences: f64,
}

impl MetricReport {
    pub fn psnr(&self) -> Aggregate {
        Aggregate {
            frames: mean(&self.sequences.iter().flat_map(|s| s.frame_psnr.iter().copied()).collect::<Vec<_>>()),
            sequences: mean(&self.sequences.iter().map(|s| s.psnr).collect::<Vec<_>>()),
        }
    }

    pub fn ssim_vh(&self) -> Aggregate {
        Aggregate {
            frames: mean(&self.sequences.iter().flat_map(|s| s.frame_ssim.iter().copied()).collect::<Vec<_>>()),
            sequences: mean(&self.sequences.iter().map(|s| s.ssim_vh).collect::<Vec<_>>()),
        }
    }

    /// Mean over sequences that have a temporal score.
    pub fn ssim_vt(&self) -> Option<f64> {
        let v: Vec<f64> = self.sequences.iter().filter_map(|s| s.ssim_vt).collect();
        (!v.is_empty()).then(|| mean(&v))
    }

    /// Paired t-tests of this report against `baseline`, matched by name.
    pub fn compare(&self, baseline: &MetricReport) -> Result<Vec<Comparison>> {
        let mut pairs = Vec::new();
        for s in &self.sequences {
            let Some(b) = baseline.sequences.iter().find(|b| b.name == s.name) else {
                return Err(Error::invalid(format!("sequence `{}` missing from baseline", s.name)));
            };
            pairs.push((s, b));
        }
        let mut rows = Vec::new();
        let mut row = |metric: &'static str, a: Vec<f64>, b: Vec<f64>| -> Result<()> {
            let test = paired_ttest(&a, &b)?;
            rows.push(Comparison {
                metric,
                mean: mean(&a),
                baseline_mean: mean(&b),
                test,
            });
            Ok(())
        };
        row("psnr", pairs.iter().map(|p| p.0.psnr).collect(), pairs.iter().map(|p| p.1.psnr).collect())?;
        row("ssim_vh", pairs.iter().map(|p| p.0.ssim_vh).collect(), pairs.iter().map(|p| p.1.ssim_vh).collect())?;
        if pairs.iter().all(|p| p.0.ssim_vt.is_some() && p.1.ssim_vt.is_some()) {
            row(
                "ssim_vt",
                pairs.iter().filter_map(|p| p.0.ssim_vt).collect(),
                pairs.iter().filter_map(|p| p.1.ssim_vt).collect(),
            )?;
        }
        Ok(rows)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Comparison {
    pub metric: &'static str,
    pub mean: f64,
    pub baseline_mean: f64,
    pub test: TTest,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}
