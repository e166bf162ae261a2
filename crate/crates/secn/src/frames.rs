//! Frame sequences on disk: one directory per sequence holding numbered
//! binary PPM (8-bit RGB) or `.ten` frames, and dataset manifests listing
//! sequence directories.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use image::{ImageFormat, RgbImage};
use secn_core::Tensor;

use crate::tenfile::{self, Dtype};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum FrameFormat {
    Ppm,
    Ten,
}

impl FrameFormat {
    fn extension(self) -> &'static str {
        match self {
            FrameFormat::Ppm => "ppm",
            FrameFormat::Ten => "ten",
        }
    }
}

/// `[3, H, W]` tensor in `[0, 1]` from an 8-bit RGB image.
pub fn image_to_tensor(img: &RgbImage) -> Tensor {
    let (w, h) = (img.width() as usize, img.height() as usize);
    Tensor::from_fn(&[3, h, w], |i| {
        let (c, p) = (i / (h * w), i % (h * w));
        img.get_pixel((p % w) as u32, (p / w) as u32)[c] as f64 / 255.0
    })
}

/// Quantises a `[3, H, W]` (or single-channel, replicated) tensor to 8 bits.
pub fn tensor_to_image(t: &Tensor) -> Result<RgbImage> {
    let (c, h, w) = t.dims3()?;
    ensure!(c == 1 || c == 3, "8-bit images need 1 or 3 channels, got {c}");
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let px = |ch: usize| (t.at3(ch.min(c - 1), y as usize, x as usize).clamp(0.0, 1.0) * 255.0).round() as u8;
        image::Rgb([px(0), px(1), px(2)])
    }))
}

pub fn read_ppm(path: &Path) -> Result<Tensor> {
    let img = image::open(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(image_to_tensor(&img.to_rgb8()))
}

pub fn write_ppm(path: &Path, t: &Tensor) -> Result<()> {
    tensor_to_image(t)?
        .save_with_format(path, ImageFormat::Pnm)
        .with_context(|| format!("writing {}", path.display()))
}

pub fn read_frame(path: &Path) -> Result<Tensor> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("ppm") => read_ppm(path),
        Some("ten") => tenfile::read(path),
        _ => bail!("unsupported frame file {}", path.display()),
    }
}

/// Frame files of a sequence directory in name order.
pub fn frame_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("ppm" | "ten")))
        .collect();
    paths.sort();
    ensure!(!paths.is_empty(), "no .ppm or .ten frames in {}", dir.display());
    Ok(paths)
}

pub fn read_sequence(dir: &Path) -> Result<Vec<Tensor>> {
    let frames = frame_paths(dir)?.iter().map(|p| read_frame(p)).collect::<Result<Vec<_>>>()?;
    if let Some(f) = frames.iter().find(|f| f.shape() != frames[0].shape()) {
        bail!("{}: frame shapes differ ({:?} vs {:?})", dir.display(), f.shape(), frames[0].shape());
    }
    Ok(frames)
}

pub fn write_sequence(dir: &Path, frames: &[Tensor], format: FrameFormat) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (i, f) in frames.iter().enumerate() {
        let path = dir.join(format!("frame_{:04}.{}", i + 1, format.extension()));
        match format {
            FrameFormat::Ppm => write_ppm(&path, f)?,
            FrameFormat::Ten => tenfile::write(&path, f, Dtype::F64)?,
        }
    }
    Ok(())
}

/// Sequence directories named by a manifest, one per line; relative paths
/// are resolved against the manifest's directory, `#` starts a comment.
pub fn read_manifest(path: &Path) -> Result<Vec<PathBuf>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let dirs: Vec<PathBuf> = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| base.join(l))
        .collect();
    ensure!(!dirs.is_empty(), "{} lists no sequences", path.display());
    Ok(dirs)
}

pub fn write_manifest(path: &Path, dirs: &[String]) -> Result<()> {
    let mut text = dirs.join("\n");
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Sequence directories behind `path`: the directory itself when it holds
/// frames, otherwise the entries of a manifest file.
pub fn resolve_sequences(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_dir() {
        let manifest = path.join("dataset.txt");
        if manifest.is_file() {
            return read_manifest(&manifest);
        }
        return Ok(vec![path.to_path_buf()]);
    }
    read_manifest(path)
}

/// Name of a sequence directory as shown in reports.
pub fn sequence_name(dir: &Path) -> String {
    dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| dir.display().to_string())
}
