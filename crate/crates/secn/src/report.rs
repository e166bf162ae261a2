//! Metric reports as text, JSON and per-frame CSV, the paired comparison
//! table, and a rendered per-frame PSNR plot.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use image::{Rgb, RgbImage};
use secn_core::metrics::{Comparison, MetricReport, SequenceMetrics};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SequenceRecord {
    pub name: String,
    pub psnr: f64,
    pub ssim_vh: f64,
    pub ssim_vt: Option<f64>,
    pub frame_psnr: Vec<f64>,
    pub frame_ssim: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MeanRecord {
    pub frames: f64,
    pub sequences: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ReportFile {
    pub psnr: MeanRecord,
    pub ssim_vh: MeanRecord,
    pub ssim_vt: Option<f64>,
    pub sequences: Vec<SequenceRecord>,
}

impl ReportFile {
    pub fn from_report(r: &MetricReport) -> Self {
        let mean = |a: secn_core::metrics::Aggregate| MeanRecord { frames: a.frames, sequences: a.sequences };
        ReportFile {
            psnr: mean(r.psnr()),
            ssim_vh: mean(r.ssim_vh()),
            ssim_vt: r.ssim_vt(),
            sequences: r
                .sequences
                .iter()
                .map(|s| SequenceRecord {
                    name: s.name.clone(),
                    psnr: s.psnr,
                    ssim_vh: s.ssim_vh,
                    ssim_vt: s.ssim_vt,
                    frame_psnr: s.frame_psnr.clone(),
                    frame_ssim: s.frame_ssim.clone(),
                })
                .collect(),
        }
    }

    pub fn to_report(&self) -> MetricReport {
        MetricReport {
            sequences: self
                .sequences
                .iter()
                .map(|s| SequenceMetrics {
                    name: s.name.clone(),
                    psnr: s.psnr,
                    ssim_vh: s.ssim_vh,
                    ssim_vt: s.ssim_vt,
                    frame_psnr: s.frame_psnr.clone(),
                    frame_ssim: s.frame_ssim.clone(),
                })
                .collect(),
        }
    }
}

pub fn render_text(r: &MetricReport) -> String {
    let vt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
    let mut out = format!("{:<24} {:>8} {:>8} {:>8} {:>7}\n", "sequence", "PSNR", "SSIM_vh", "SSIM_vt", "frames");
    for s in &r.sequences {
        out += &format!("{:<24} {:>8.3} {:>8.4} {:>8} {:>7}\n", s.name, s.psnr, s.ssim_vh, vt(s.ssim_vt), s.frame_psnr.len());
    }
    let (p, v) = (r.psnr(), r.ssim_vh());
    out += &format!("{:<24} {:>8.3} {:>8.4} {:>8}\n", "mean over sequences", p.sequences, v.sequences, vt(r.ssim_vt()));
    out += &format!("{:<24} {:>8.3} {:>8.4}\n", "mean over frames", p.frames, v.frames);
    out
}

pub fn render_comparison(rows: &[Comparison], name: &str, baseline: &str) -> String {
    let mut out = format!("{:<8} {:>12} {:>12}   {}\n", "metric", name, baseline, "(F_t/F_p)");
    for c in rows {
        out += &format!(
            "{:<8} {:>12.4} {:>12.4}   ({:.3}/{:.4})\n",
            c.metric, c.mean, c.baseline_mean, c.test.t, c.test.p
        );
    }
    out
}

pub fn write_json(path: &Path, r: &MetricReport) -> Result<()> {
    let json = serde_json::to_string_pretty(&ReportFile::from_report(r))?;
    fs::write(path, json).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json(path: &Path) -> Result<MetricReport> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: ReportFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(file.to_report())
}

pub fn write_frame_csv(path: &Path, r: &MetricReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["sequence", "frame", "psnr", "ssim_vh"])?;
    for s in &r.sequences {
        for (i, (p, q)) in s.frame_psnr.iter().zip(&s.frame_ssim).enumerate() {
            w.write_record([s.name.clone(), (i + 1).to_string(), p.to_string(), q.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

const PALETTE: [[u8; 3]; 6] = [[31, 119, 180], [255, 127, 14], [44, 160, 44], [214, 39, 40], [148, 103, 189], [140, 86, 75]];

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), color: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, color);
        }
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Per-frame PSNR of every sequence as coloured polylines over a shared
/// axis frame. The vertical range spans the observed values.
pub fn plot_frame_psnr(r: &MetricReport, width: u32, height: u32) -> RgbImage {
    let mut img = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));
    let margin = 24i64;
    let (w, h) = (width as i64 - 2 * margin, height as i64 - 2 * margin);
    let axis = Rgb([0, 0, 0]);
    line(&mut img, (margin, margin), (margin, margin + h), axis);
    line(&mut img, (margin, margin + h), (margin + w, margin + h), axis);
    let values: Vec<f64> = r.sequences.iter().flat_map(|s| s.frame_psnr.iter().copied()).collect();
    if values.is_empty() {
        return img;
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let longest = r.sequences.iter().map(|s| s.frame_psnr.len()).max().unwrap_or(1).max(2) - 1;
    for (k, s) in r.sequences.iter().enumerate() {
        let c = Rgb(PALETTE[k % PALETTE.len()]);
        let pts: Vec<(i64, i64)> = s
            .frame_psnr
            .iter()
            .enumerate()
            .map(|(i, &p)| (margin + (i as i64 * w) / longest as i64, margin + h - ((p - lo) / span * h as f64).round() as i64))
            .collect();
        for pair in pts.windows(2) {
            line(&mut img, pair[0], pair[1], c);
        }
        if pts.len() == 1 {
            line(&mut img, pts[0], pts[0], c);
        }
    }
    img
}

/// Writes `report.txt`, `report.json`, `frames.csv` and `psnr.ppm` to `dir`.
pub fn write_all(dir: &Path, r: &MetricReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.txt"), render_text(r))?;
    write_json(&dir.join("report.json"), r)?;
    write_frame_csv(&dir.join("frames.csv"), r)?;
    plot_frame_psnr(r, 640, 360)
        .save_with_format(dir.join("psnr.ppm"), image::ImageFormat::Pnm)
        .context("writing psnr.ppm")?;
    Ok(())
}
